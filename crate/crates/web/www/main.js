import init, { sample, compare, top_edges } from "./pkg/ksgm_web.js";

const $ = (id) => document.getElementById(id);
const COLORS = { noncentral: "#1f77b4", centered: "#d62728" };
let last = null;

function spec() {
  const graph = $("graph").value === "ba"
    ? { kind: "barabasi_albert", attach: 1 }
    : { kind: "erdos_renyi", p: 0.1 };
  const scenario = { kind: $("scenario").value };
  if (scenario.kind === "constant_offset") scenario.c = 1.0;
  return JSON.stringify({
    dims: [+$("d0").value, +$("d1").value],
    graphs: [graph],
    scenario,
    trials: 1,
    seed: +$("seed").value,
    weights: { low: 0.4, high: 0.6, loading: 0.05 },
    fit: { solver_cfg: { rho: [+$("rho").value], max_iters: +$("iters").value } },
  });
}

function status(msg, err = false) {
  $("status").textContent = msg;
  $("status").className = err ? "err" : "";
}

function figure(parent, caption, w, h) {
  const fig = document.createElement("figure");
  const c = document.createElement("canvas");
  c.width = w;
  c.height = h;
  const cap = document.createElement("figcaption");
  cap.textContent = caption;
  fig.append(c, cap);
  parent.append(fig);
  return c;
}

// Diverging map: blue for negative, red for positive, white at zero.
function heatmap(canvas, m, opts = {}) {
  const ctx = canvas.getContext("2d");
  const r = m.length, c = m[0].length;
  const cell = Math.max(1, Math.floor(Math.min(canvas.width / c, canvas.height / r)));
  let scale = opts.scale ?? 0;
  if (!scale) {
    for (let i = 0; i < r; i++)
      for (let j = 0; j < c; j++)
        if (!(opts.skipDiag && i === j)) scale = Math.max(scale, Math.abs(m[i][j]));
  }
  scale = scale || 1;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  for (let i = 0; i < r; i++) {
    for (let j = 0; j < c; j++) {
      let v = opts.skipDiag && i === j ? 0 : Math.max(-1, Math.min(1, m[i][j] / scale));
      const t = Math.round(255 * (1 - Math.abs(v)));
      ctx.fillStyle = v >= 0 ? `rgb(255,${t},${t})` : `rgb(${t},${t},255)`;
      ctx.fillRect(j * cell, i * cell, cell, cell);
    }
  }
  if (opts.marks) {
    ctx.strokeStyle = "#000";
    for (const [i, j] of opts.marks) {
      ctx.strokeRect(j * cell + 0.5, i * cell + 0.5, cell - 1, cell - 1);
      ctx.strokeRect(i * cell + 0.5, j * cell + 0.5, cell - 1, cell - 1);
    }
  }
}

function prPlot(canvas, series) {
  const ctx = canvas.getContext("2d");
  const W = canvas.width, H = canvas.height, pad = 30;
  const x = (v) => pad + v * (W - 2 * pad);
  const y = (v) => H - pad - v * (H - 2 * pad);
  ctx.clearRect(0, 0, W, H);
  ctx.strokeStyle = "#888";
  ctx.strokeRect(x(0), y(1), x(1) - x(0), y(0) - y(1));
  ctx.fillStyle = "#444";
  ctx.font = "11px sans-serif";
  ctx.fillText("recall", W / 2 - 15, H - 8);
  ctx.save();
  ctx.translate(10, H / 2 + 20);
  ctx.rotate(-Math.PI / 2);
  ctx.fillText("precision", 0, 0);
  ctx.restore();
  series.forEach(({ name, points, aupr }, n) => {
    ctx.strokeStyle = COLORS[name];
    ctx.beginPath();
    points.forEach((p, i) => (i ? ctx.lineTo(x(p.recall), y(p.precision)) : ctx.moveTo(x(p.recall), y(p.precision))));
    ctx.stroke();
    ctx.fillStyle = COLORS[name];
    ctx.fillText(`${name} AUPR ${aupr.toFixed(3)}`, x(0.45), y(0.95) + 14 * n);
  });
}

function showSample(s) {
  const v = $("data-view");
  v.innerHTML = "<h2>Sample</h2>";
  heatmap(figure(v, "observed matrix", 256, 256), s.data);
  heatmap(figure(v, "mean offset", 256, 256), s.offset);
  s.truth.forEach((a, i) => heatmap(figure(v, `true graph, axis ${i}`, 256, 256), a));
}

function drawHeatmaps() {
  if (!last) return;
  const k = +$("k").value;
  $("kval").textContent = k;
  const v = $("heat-view");
  v.innerHTML = "<h2>Estimated precision factors (axis 0, top-k edges boxed)</h2>";
  heatmap(figure(v, "true graph", 256, 256), last.truth[0]);
  for (const r of last.variants) {
    const marks = JSON.parse(top_edges(JSON.stringify(r.factors[0]), k));
    heatmap(figure(v, r.variant, 256, 256), r.factors[0], { skipDiag: true, marks });
  }
}

function showComparison(c) {
  last = c;
  const v = $("pr-view");
  v.innerHTML = "<h2>Precision-recall</h2>";
  c.truth.forEach((_, axis) => {
    prPlot(
      figure(v, `axis ${axis}`, 320, 260),
      c.variants.map((r) => ({ name: r.variant, points: r.curves[axis].points, aupr: r.aupr[axis] })),
    );
  });
  const d = c.truth[0].length;
  $("k").max = (d * (d - 1)) / 2;
  drawHeatmaps();
}

function guarded(label, f) {
  return () => {
    status(`${label}...`);
    // let the status line paint before the blocking call
    setTimeout(() => {
      const t = performance.now();
      try {
        f();
        status(`${label} done in ${((performance.now() - t) / 1000).toFixed(1)} s`);
      } catch (e) {
        status(String(e.message ?? e), true);
      }
    }, 10);
  };
}

await init();
$("sample").onclick = guarded("sampling", () => showSample(JSON.parse(sample(spec()))));
$("compare").onclick = guarded("fitting", () => showComparison(JSON.parse(compare(spec()))));
$("k").oninput = () => {
  try {
    drawHeatmaps();
  } catch (e) {
    status(String(e.message ?? e), true);
  }
};
$("kval").textContent = $("k").value;
