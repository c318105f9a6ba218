import init, { synthesize, bandLimit, register } from "./pkg/bl_lddmm_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

// Core layout is axis 1 fastest; axis 0 runs left to right, axis 1 upwards.
function pixel(n, x, y) {
  return x * n + (n - 1 - y);
}

function draw(id, data, n, color) {
  const c = $(id);
  c.width = n;
  c.height = n;
  const ctx = c.getContext("2d");
  const img = ctx.createImageData(n, n);
  for (let y = 0; y < n; y++) {
    for (let x = 0; x < n; x++) {
      const [r, g, b] = color(data[pixel(n, x, y)]);
      const o = 4 * (y * n + x);
      img.data[o] = r;
      img.data[o + 1] = g;
      img.data[o + 2] = b;
      img.data[o + 3] = 255;
    }
  }
  ctx.putImageData(img, 0, 0);
}

function gray(data) {
  let lo = Infinity, hi = -Infinity;
  for (const v of data) { lo = Math.min(lo, v); hi = Math.max(hi, v); }
  const s = hi > lo ? 255 / (hi - lo) : 0;
  return (v) => { const g = (v - lo) * s; return [g, g, g]; };
}

// Symmetric blue-white-red around `mid`.
function diverging(data, mid) {
  let span = 0;
  for (const v of data) span = Math.max(span, Math.abs(v - mid));
  span = span || 1;
  return (v) => {
    const t = (v - mid) / span;
    const w = 255 * (1 - Math.abs(t));
    return t < 0 ? [w, w, 255] : [255, w, w];
  };
}

function drawMesh(disp, n) {
  const c = $("mesh");
  const px = 192;
  c.width = px;
  c.height = px;
  const ctx = c.getContext("2d");
  ctx.fillStyle = "#fff";
  ctx.fillRect(0, 0, px, px);
  ctx.strokeStyle = "#246";
  ctx.lineWidth = 0.7;
  const size = n * n;
  const at = (i, j) => {
    const k = i * n + j;
    return [(i + n * disp[k]) * px / n, px - (j + n * disp[size + k]) * px / n];
  };
  const step = Math.max(1, Math.floor(n / 16));
  for (let a = 0; a < n; a += step) {
    for (const along of [0, 1]) {
      ctx.beginPath();
      for (let b = 0; b < n; b++) {
        const [x, y] = along ? at(a, b) : at(b, a);
        b ? ctx.lineTo(x, y) : ctx.moveTo(x, y);
      }
      ctx.stroke();
    }
  }
}

function plot(values) {
  const c = $("history");
  const ctx = c.getContext("2d");
  const w = c.width, h = c.height, pad = 28;
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, 4, w - pad - 4, h - pad - 4);
  const top = Math.max(...values, 1);
  const x = (i) => pad + (w - pad - 4) * i / Math.max(values.length - 1, 1);
  const y = (v) => 4 + (h - pad - 4) * (1 - v / top);
  ctx.fillStyle = "#444";
  ctx.fillText(top.toFixed(0), 2, 12);
  ctx.fillText("0", 2, h - pad);
  ctx.fillText(String(values.length - 1), w - 20, h - 10);
  ctx.strokeStyle = "#c33";
  ctx.beginPath();
  values.forEach((v, i) => (i ? ctx.lineTo(x(i), y(v)) : ctx.moveTo(x(i), y(v))));
  ctx.stroke();
}

function pairArgs() {
  return [$("kind").value, num("size"), num("seed")];
}

function showPair() {
  const pair = synthesize(...pairArgs());
  const t = pair.template();
  draw("template", t, pair.size, gray(t));
  draw("target", pair.target(), pair.size, gray(pair.target()));
  $("lowk").max = String(Math.floor((pair.size - 1) / 2));
  showLowPass(t);
}

function showLowPass(template) {
  const n = num("size");
  const k = num("lowk");
  $("lowk-value").textContent = k;
  const t = template || synthesize(...pairArgs()).template();
  const low = bandLimit(...pairArgs(), k);
  draw("low", low, n, gray(t));
  const lost = low.map((v, i) => t[i] - v);
  draw("lost", lost, n, diverging(lost, 0));
}

function runRegistration() {
  const n = num("size");
  $("status").textContent = "running...";
  // let the browser paint the status line before blocking
  setTimeout(() => {
    try {
      const r = register(
        ...pairArgs(), num("bound"), num("alpha"), num("sigma2"),
        $("incompressible").checked, $("method").value, num("outer"));
      const mse = Array.from(r.mse());
      const [jmin, jmax] = r.jacobian_range();
      $("status").textContent =
        `${r.status} after ${mse.length - 1} iterations in ${r.wall_time.toFixed(2)} s\n` +
        `MSE_rel ${mse[mse.length - 1].toFixed(2)}%, det D phi in [${jmin.toFixed(3)}, ${jmax.toFixed(3)}]`;
      const w = r.warped();
      draw("warped", w, n, gray(synthesize(...pairArgs()).template()));
      const d = r.difference();
      draw("difference", d, n, diverging(d, 0));
      const j = r.jacobian();
      draw("jacobian", j, n, diverging(j, 1));
      drawMesh(r.displacement(), n);
      plot(mse);
    } catch (e) {
      $("status").textContent = `error: ${e.message || e}`;
    }
  }, 20);
}

function guarded(f) {
  return (...args) => {
    try { f(...args); } catch (e) { $("status").textContent = `error: ${e.message || e}`; }
  };
}

await init();
$("make").onclick = guarded(showPair);
$("lowk").oninput = guarded(() => showLowPass());
$("run").onclick = runRegistration;
showPair();
