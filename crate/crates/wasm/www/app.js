// Plotting and wiring for the range-ambiguity demos. The wasm module does
// all the math; this file only draws JSON payloads onto canvases.

import init, {
  scene_cdfs_json,
  mixture_fit_json,
  registration_bias_json,
} from "./pkg/multiret_wasm.js";

const COLORS = {
  temporal: "#1f6fb2",
  spatial: "#e07b28",
  model: "#2e8b57",
  pdf: "#c2a0e8",
  guide: "#555",
};

function plotArea(canvas) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.fillStyle = "white";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  return { ctx, m: 42, w: canvas.width, h: canvas.height };
}

function axes(area, xLo, xHi, yLo, yHi, xLabel) {
  const { ctx, m, w, h } = area;
  const sx = (x) => m + ((x - xLo) / (xHi - xLo)) * (w - 2 * m);
  const sy = (y) => h - m - ((y - yLo) / (yHi - yLo)) * (h - 2 * m);
  ctx.strokeStyle = "#333";
  ctx.lineWidth = 1;
  ctx.beginPath();
  ctx.moveTo(m, m); ctx.lineTo(m, h - m); ctx.lineTo(w - m, h - m);
  ctx.stroke();
  ctx.fillStyle = "#666";
  ctx.font = "11px system-ui";
  for (let t = 0; t <= 4; t++) {
    const fy = yLo + (t / 4) * (yHi - yLo);
    const fx = xLo + (t / 4) * (xHi - xLo);
    ctx.strokeStyle = "#e4e4e4";
    ctx.beginPath(); ctx.moveTo(m, sy(fy)); ctx.lineTo(w - m, sy(fy)); ctx.stroke();
    ctx.fillText(fy.toFixed(2), 4, sy(fy) + 4);
    ctx.fillText(fx.toFixed(2), sx(fx) - 12, h - m + 16);
  }
  ctx.fillText(xLabel, w / 2 - 20, h - 6);
  return { sx, sy };
}

// right-continuous step curve from jump arrays {x, pre, post}
function drawSteps(ctx, s, jumps, color, xLo, xHi) {
  ctx.strokeStyle = color;
  ctx.lineWidth = 1.7;
  ctx.beginPath();
  let prev = 0;
  ctx.moveTo(s.sx(xLo), s.sy(0));
  for (let i = 0; i < jumps.x.length; i++) {
    ctx.lineTo(s.sx(jumps.x[i]), s.sy(prev));
    prev = jumps.post[i];
    ctx.lineTo(s.sx(jumps.x[i]), s.sy(prev));
  }
  ctx.lineTo(s.sx(xHi), s.sy(prev));
  ctx.stroke();
}

function drawCurve(ctx, s, xs, ys, color, width = 1.6, dash = []) {
  ctx.strokeStyle = color;
  ctx.lineWidth = width;
  ctx.setLineDash(dash);
  ctx.beginPath();
  xs.forEach((x, i) => {
    if (i === 0) ctx.moveTo(s.sx(x), s.sy(ys[i]));
    else ctx.lineTo(s.sx(x), s.sy(ys[i]));
  });
  ctx.stroke();
  ctx.setLineDash([]);
}

function jumpRange(...jumpSets) {
  let lo = Infinity, hi = -Infinity;
  for (const j of jumpSets) {
    if (j.x.length) {
      lo = Math.min(lo, j.x[0]);
      hi = Math.max(hi, j.x[j.x.length - 1]);
    }
  }
  if (!isFinite(lo)) { lo = 0; hi = 1; }
  const pad = Math.max(0.25, 0.08 * (hi - lo));
  return [lo - pad, hi + pad];
}

const $ = (id) => document.getElementById(id);

// ------------------------------------------------------- scene panel

function renderScene() {
  const preset = $("scene-preset").value;
  const noise = parseFloat($("scene-noise").value);
  const hit = parseFloat($("scene-hit").value);
  const frames = parseInt($("scene-frames").value, 10);
  const seed = BigInt($("scene-seed").value || "0");
  $("scene-noise-v").textContent = noise.toFixed(3);
  $("scene-hit-v").textContent = hit.toFixed(2);
  $("scene-frames-v").textContent = String(frames);

  const data = JSON.parse(scene_cdfs_json(preset, noise, hit, frames, seed));
  const area = plotArea($("scene-canvas"));
  const [xLo, xHi] = jumpRange(data.temporal, data.spatial);
  const s = axes(area, xLo, xHi, 0, 1.02, "range (m)");
  drawSteps(area.ctx, s, data.temporal, COLORS.temporal, xLo, xHi);
  drawSteps(area.ctx, s, data.spatial, COLORS.spatial, xLo, xHi);
  if (data.gmm) {
    drawCurve(area.ctx, s, data.gmm.curve_x, data.gmm.curve_f, COLORS.model, 1.4, [5, 3]);
  }

  let text = `center raypath labeled multi-return: ${data.labeled_multi_return}\n`;
  if (data.mean !== null) {
    text += `temporal mean ${data.mean.toFixed(3)} m, std ${data.std.toFixed(4)} m\n`;
  }
  text += `KS(temporal, spatial) = ${data.ks_distance.toFixed(4)} at x = ${data.ks_at.toFixed(3)} m`;
  if (data.gmm) {
    text += `\nmixture fit error ${data.gmm.fit_error.toFixed(4)}; clusters:`;
    for (const c of data.gmm.clusters) {
      text += `\n  α=${c.alpha.toFixed(3)}  μ=${c.mu.toFixed(3)} m  σ=${c.sigma.toFixed(4)} m`;
    }
  }
  $("scene-readout").textContent = text;
}

// ----------------------------------------------------- mixture panel

function renderMixture() {
  const comp = [];
  for (const k of ["1", "2", "3"]) {
    const w = parseFloat($("mx-w" + k).value);
    if (w > 0) {
      comp.push(w, parseFloat($("mx-m" + k).value), parseFloat($("mx-s" + k).value));
    }
  }
  const n = parseInt($("mx-n").value, 10);
  const gap = parseFloat($("mx-gap").value);
  const seed = BigInt($("mx-seed").value || "0");
  $("mx-n-v").textContent = String(n);
  $("mx-gap-v").textContent = gap.toFixed(1);

  const data = JSON.parse(mixture_fit_json(new Float64Array(comp), n, gap, seed));
  const area = plotArea($("mx-canvas"));
  const [xLo, xHi] = jumpRange(data.empirical);
  const s = axes(area, xLo, xHi, 0, 1.02, "range (m)");
  drawSteps(area.ctx, s, data.empirical, COLORS.temporal, xLo, xHi);

  let text = "";
  if (data.fitted) {
    drawCurve(area.ctx, s, data.fitted.curve_x, data.fitted.curve_f, COLORS.model, 1.6, [5, 3]);
    const peak = Math.max(...data.fitted.curve_pdf, 1e-9);
    const scaled = data.fitted.curve_pdf.map((p) => (0.95 * p) / peak);
    drawCurve(area.ctx, s, data.fitted.curve_x, scaled, COLORS.pdf, 1.2);
    text += `fit error ${data.fitted.fit_error.toFixed(4)} (sup norm)\n`;
    text += `thresholds at ${data.thresholds.map((t) => t.toFixed(3)).join(", ") || "(none)"}\n`;
    text += "fitted vs true (α, μ, σ):";
    data.fitted.clusters.forEach((c, i) => {
      const t = data.truth[i];
      const truthText = t ? `  |  true ${t.alpha.toFixed(3)}, ${t.mu.toFixed(3)}, ${t.sigma.toFixed(4)}` : "";
      text += `\n  fit ${c.alpha.toFixed(3)}, ${c.mu.toFixed(3)}, ${c.sigma.toFixed(4)}${truthText}`;
    });
  } else {
    text = "segmentation produced no fittable clusters (raise the gap?)";
  }
  $("mx-readout").textContent = text;
}

// ------------------------------------------------- registration panel

function renderBias() {
  const phi = parseFloat($("rb-phi").value);
  const gap = parseFloat($("rb-gap").value);
  const trials = parseInt($("rb-trials").value, 10);
  const seed = BigInt($("rb-seed").value || "0");
  $("rb-phi-v").textContent = phi.toFixed(2);
  $("rb-gap-v").textContent = gap.toFixed(2);
  $("rb-trials-v").textContent = String(trials);

  const data = JSON.parse(registration_bias_json(phi, gap, trials, seed));
  const area = plotArea($("rb-canvas"));
  const all = data.icp.concat(data.ndt, [data.predicted]);
  const yHi = Math.max(...all) * 1.25 + 1e-4;
  const yLo = Math.min(0, ...all) - 1e-4;
  const s = axes(area, 0, trials, yLo, yHi, "trial");
  const { ctx } = area;

  // prediction line
  ctx.strokeStyle = COLORS.guide;
  ctx.setLineDash([6, 4]);
  ctx.beginPath();
  ctx.moveTo(s.sx(0), s.sy(data.predicted));
  ctx.lineTo(s.sx(trials), s.sy(data.predicted));
  ctx.stroke();
  ctx.setLineDash([]);

  const dot = (xs, color, offset) => {
    ctx.fillStyle = color;
    xs.forEach((b, i) => {
      ctx.beginPath();
      ctx.arc(s.sx(i + offset), s.sy(b), 2.4, 0, 2 * Math.PI);
      ctx.fill();
    });
  };
  dot(data.icp, COLORS.temporal, 0.0);
  dot(data.ndt, COLORS.spatial, 0.35);

  const line = (y, color) => {
    ctx.strokeStyle = color;
    ctx.lineWidth = 1.2;
    ctx.beginPath();
    ctx.moveTo(s.sx(0), s.sy(y));
    ctx.lineTo(s.sx(trials), s.sy(y));
    ctx.stroke();
  };
  line(data.icp_mean, COLORS.temporal);
  line(data.ndt_mean, COLORS.spatial);

  $("rb-readout").textContent =
    `predicted bias φ·Δ/2 = ${data.predicted.toFixed(5)} m\n` +
    `ICP mean bias  ${data.icp_mean.toFixed(5)} m\n` +
    `NDT mean bias  ${data.ndt_mean.toFixed(5)} m`;
}

// ---------------------------------------------------------- wiring

async function main() {
  try {
    await init();
  } catch (err) {
    document.getElementById("load-error").style.display = "block";
    console.error(err);
    return;
  }
  const hook = (ids, fn) => {
    for (const id of ids) {
      $(id).addEventListener("input", () => {
        try { fn(); } catch (err) { console.error(err); }
      });
    }
    fn();
  };
  hook(["scene-preset", "scene-noise", "scene-hit", "scene-frames", "scene-seed"], renderScene);
  hook(
    ["mx-w1", "mx-m1", "mx-s1", "mx-w2", "mx-m2", "mx-s2", "mx-w3", "mx-m3", "mx-s3", "mx-n", "mx-gap", "mx-seed"],
    renderMixture
  );
  hook(["rb-phi", "rb-gap", "rb-trials", "rb-seed"], renderBias);
}

main();
