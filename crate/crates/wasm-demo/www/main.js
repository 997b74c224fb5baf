import init, { loss_curves, trajectory, noise_sample } from "./pkg/alpha_iou_wasm_demo.js";

const $ = (id) => document.getElementById(id);
const PAD = 36;

function showError(e) {
  $("error").textContent = String(e && e.message ? e.message : e);
}

// Plot area helper: maps data coordinates onto a padded canvas.
function frame(canvas, xmax, ymax, xlabel, ylabel) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width - 2 * PAD;
  const h = canvas.height - 2 * PAD;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#888";
  ctx.strokeRect(PAD, PAD, w, h);
  ctx.fillStyle = "#444";
  ctx.font = "12px sans-serif";
  ctx.fillText(xlabel, PAD + w / 2 - 10, canvas.height - 8);
  ctx.fillText(ylabel, 4, PAD - 10);
  ctx.fillText("0", PAD - 12, PAD + h + 4);
  ctx.fillText(String(+ymax.toFixed(2)), 2, PAD + 4);
  ctx.fillText(String(+xmax.toFixed(2)), PAD + w - 10, PAD + h + 16);
  const x = (v) => PAD + (v / xmax) * w;
  const y = (v) => PAD + h - (Math.min(v, ymax) / ymax) * h;
  return { ctx, x, y };
}

function line(f, xs, ys, color) {
  const { ctx } = f;
  ctx.strokeStyle = color;
  ctx.lineWidth = 2;
  ctx.beginPath();
  let pen = false;
  xs.forEach((xv, i) => {
    const yv = ys[i];
    if (yv === null || !Number.isFinite(yv)) {
      pen = false;
      return;
    }
    if (pen) ctx.lineTo(f.x(xv), f.y(yv));
    else ctx.moveTo(f.x(xv), f.y(yv));
    pen = true;
  });
  ctx.stroke();
  ctx.lineWidth = 1;
}

// ---- loss curves

function drawCurves() {
  const alpha = +$("curve-alpha").value;
  const kind = $("curve-kind").value;
  $("curve-alpha-v").textContent = alpha.toFixed(1);
  const curves = JSON.parse(loss_curves(kind, new Float64Array([1, alpha]), 201));
  const lossMax = kind === "log-iou" ? 5 : 1;
  const lf = frame($("loss-canvas"), 1, lossMax, "IoU", "loss");
  const gf = frame($("grad-canvas"), 1, 5, "IoU", "|dL/dIoU|");
  const colors = ["#bbb", "#c33"];
  curves.forEach((c, i) => {
    line(lf, c.iou, c.loss, colors[i]);
    line(gf, c.iou, c.grad_mag, colors[i]);
  });
}

// ---- regression

const GT = [0.5, 0.5, 0.3, 0.3];
let init = [0.15, 0.2, 0.12, 0.1];
let run = null;

function drawBox(ctx, b, size, color, dash) {
  const [cx, cy, w, h] = b;
  ctx.strokeStyle = color;
  ctx.setLineDash(dash || []);
  ctx.lineWidth = 2;
  ctx.strokeRect((cx - w / 2) * size, (cy - h / 2) * size, w * size, h * size);
  ctx.setLineDash([]);
  ctx.lineWidth = 1;
}

function drawRegression() {
  const canvas = $("box-canvas");
  const ctx = canvas.getContext("2d");
  const size = canvas.width;
  ctx.clearRect(0, 0, size, size);
  drawBox(ctx, GT, size, "#2a2");
  drawBox(ctx, init, size, "#999", [4, 4]);
  if (!run) return;
  const step = Math.min(+$("reg-step").value, run.boxes.length - 1);
  $("reg-step-v").textContent = step;
  drawBox(ctx, run.boxes[step], size, "#c33");

  const steps = run.iou.map((_, i) => i);
  const f = frame($("traj-canvas"), steps.length - 1, 1, "step", "IoU");
  line(f, steps, run.iou, "#c33");
  f.ctx.strokeStyle = "#2a2";
  f.ctx.beginPath();
  f.ctx.moveTo(f.x(step), f.y(0));
  f.ctx.lineTo(f.x(step), f.y(1));
  f.ctx.stroke();
  const conv = run.converged_at === null ? "not reached" : `step ${run.converged_at}`;
  $("reg-status").textContent = `IoU ${run.iou[step].toFixed(4)} at step ${step}; IoU 0.99 ${conv}`;
}

function runRegression() {
  const alpha = +$("reg-alpha").value;
  $("reg-alpha-v").textContent = alpha.toFixed(1);
  const steps = +$("reg-step").max;
  run = JSON.parse(
    trajectory($("reg-kind").value, alpha, new Float64Array(init), new Float64Array(GT), +$("reg-lr").value, steps),
  );
  drawRegression();
}

function bindBoxDrawing() {
  const canvas = $("box-canvas");
  let start = null;
  const pos = (e) => {
    const r = canvas.getBoundingClientRect();
    return [(e.clientX - r.left) / r.width, (e.clientY - r.top) / r.height];
  };
  canvas.addEventListener("mousedown", (e) => (start = pos(e)));
  canvas.addEventListener("mouseup", (e) => {
    if (!start) return;
    const end = pos(e);
    const w = Math.abs(end[0] - start[0]);
    const h = Math.abs(end[1] - start[1]);
    if (w > 0.01 && h > 0.01) {
      init = [(start[0] + end[0]) / 2, (start[1] + end[1]) / 2, w, h];
      try {
        runRegression();
        showError("");
      } catch (err) {
        showError(err);
      }
    }
    start = null;
  });
}

// ---- noise

function drawNoise() {
  const eta = +$("noise-eta").value;
  const seed = Math.max(0, Math.floor(+$("noise-seed").value)) >>> 0;
  $("noise-eta-v").textContent = eta.toFixed(2);
  const sample = JSON.parse(noise_sample(eta, seed, 2000));

  const canvas = $("noise-canvas");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  for (let i = 0; i < 12; i++) {
    drawBox(ctx, sample.clean[i], canvas.width, "#2a2");
    drawBox(ctx, sample.noisy[i], canvas.width, "#c33", [3, 3]);
  }

  const bins = new Array(20).fill(0);
  for (const v of sample.ious) bins[Math.min(19, Math.floor(v * 20))]++;
  const top = Math.max(...bins);
  const f = frame($("hist-canvas"), 1, top, "IoU(noisy, clean)", "boxes");
  f.ctx.fillStyle = "#c33";
  bins.forEach((n, i) => {
    const x0 = f.x(i / 20);
    f.ctx.fillRect(x0 + 1, f.y(n), f.x((i + 1) / 20) - x0 - 2, f.y(0) - f.y(n));
  });
  $("noise-status").textContent = `mean IoU ${sample.mean_iou.toFixed(4)} over ${sample.ious.length} boxes`;
}

function guard(fn) {
  return () => {
    try {
      fn();
      showError("");
    } catch (err) {
      showError(err);
    }
  };
}

await init();
$("curve-alpha").addEventListener("input", guard(drawCurves));
$("curve-kind").addEventListener("change", guard(drawCurves));
for (const id of ["reg-alpha", "reg-kind", "reg-lr"]) $(id).addEventListener("input", guard(runRegression));
$("reg-step").addEventListener("input", guard(drawRegression));
$("noise-eta").addEventListener("input", guard(drawNoise));
$("noise-seed").addEventListener("input", guard(drawNoise));
bindBoxDrawing();
guard(drawCurves)();
guard(runRegression)();
guard(drawNoise)();
