import init, { toy_trace, window_spectrum, detect_scenario } from "./pkg/subtrack_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function axes(ctx, w, h) {
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.beginPath();
  ctx.moveTo(40, 10);
  ctx.lineTo(40, h - 20);
  ctx.lineTo(w - 10, h - 20);
  ctx.stroke();
}

function drawTrace(view) {
  const c = $("trace");
  const ctx = c.getContext("2d");
  const w = c.width, h = c.height;
  axes(ctx, w, h);
  const top = Math.max(view.proj_threshold, ...view.trace.map((r) => Math.max(r.pi_proj, r.pi_eig))) * 1.05;
  const x = (l) => 40 + ((l - 1) / (view.T - 1)) * (w - 50);
  const y = (v) => h - 20 - (Math.max(v, 0) / top) * (h - 30);

  const vline = (l, color) => {
    ctx.strokeStyle = color;
    ctx.beginPath();
    ctx.moveTo(x(l), 10);
    ctx.lineTo(x(l), h - 20);
    ctx.stroke();
  };
  view.truth.forEach((t) => vline(t, "#27ae60"));
  view.refined.forEach((t) => vline(t, "#8e44ad"));

  ctx.setLineDash([5, 4]);
  for (const level of [view.threshold, view.proj_threshold]) {
    ctx.strokeStyle = "#555";
    ctx.beginPath();
    ctx.moveTo(40, y(level));
    ctx.lineTo(w - 10, y(level));
    ctx.stroke();
  }
  ctx.setLineDash([]);

  // scanning jumps after each trigger, so break the curve on gaps
  for (const [key, color] of [["pi_proj", "#c0392b"], ["pi_eig", "#2471a3"]]) {
    ctx.strokeStyle = color;
    ctx.beginPath();
    let prev = null;
    for (const r of view.trace) {
      if (prev === null || r.l !== prev + 1) ctx.moveTo(x(r.l), y(r[key]));
      else ctx.lineTo(x(r.l), y(r[key]));
      prev = r.l;
    }
    ctx.stroke();
  }
}

function drawSpectrum(view) {
  const c = $("spectrum");
  const ctx = c.getContext("2d");
  const w = c.width, h = c.height;
  axes(ctx, w, h);
  const top = Math.max(view.threshold, ...view.eigenvalues) * 1.1;
  const y = (v) => h - 20 - (Math.max(v, 0) / top) * (h - 30);
  const bw = (w - 60) / view.eigenvalues.length;
  view.eigenvalues.forEach((v, i) => {
    ctx.fillStyle = v > view.threshold ? "#2471a3" : "#bbb";
    ctx.fillRect(45 + i * bw, y(v), bw - 6, h - 20 - y(v));
  });
  ctx.setLineDash([5, 4]);
  ctx.strokeStyle = "#555";
  ctx.beginPath();
  ctx.moveTo(40, y(view.threshold));
  ctx.lineTo(w - 10, y(view.threshold));
  ctx.stroke();
  ctx.setLineDash([]);
}

function runToy() {
  const view = JSON.parse(toy_trace(num("toy-seed"), num("toy-window")));
  if (view.error) {
    $("toy-out").textContent = view.error;
    return;
  }
  drawTrace(view);
  $("toy-out").textContent =
    `L=${view.window}  b=${view.threshold.toFixed(1)}\n` +
    `truth   ${view.truth.join(", ")}\ncoarse  ${view.coarse.join(", ")}\nrefined ${view.refined.join(", ")}`;
}

function runSpectrum() {
  const view = JSON.parse(window_spectrum(num("toy-seed"), num("spec-last"), num("toy-window")));
  if (view.error) {
    $("spec-out").textContent = view.error;
    return;
  }
  drawSpectrum(view);
  $("spec-out").textContent =
    `layers ${view.first}..${view.last}: ${view.retained} eigenvalues above b=${view.threshold.toFixed(1)}\n` +
    view.eigenvalues.map((v) => v.toFixed(1)).join("  ");
}

function runScenario() {
  const view = JSON.parse(
    detect_scenario($("sc-id").value, num("sc-param"), num("sc-n"), num("sc-t"), num("sc-seed")),
  );
  $("sc-out").textContent = view.error
    ? view.error
    : `truth   ${view.truth.join(", ")}\ncoarse  ${view.coarse.join(", ")}  (Hausdorff ${view.coarse_hausdorff})\n` +
      `refined ${view.refined.join(", ")}  (Hausdorff ${view.refined_hausdorff})\nsegment ranks ${view.segment_ranks.join(", ")}`;
}

await init();
$("toy-run").onclick = () => { runToy(); runSpectrum(); };
$("spec-run").onclick = runSpectrum;
$("sc-run").onclick = runScenario;
runToy();
runSpectrum();
