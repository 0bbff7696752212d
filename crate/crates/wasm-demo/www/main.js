import init, { bound_curve, chunk_curve, default_bound_params, gap_study } from "./pkg/chunklab_wasm.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

const field = (sec, name) => sec.querySelector(`[name=${name}]`).value;
const ints = (s) => new Uint32Array(s.split(",").map((x) => parseInt(x.trim(), 10)));

// Line plot of named series [{name, points: [[x, y], ...]}]; optional log axes
// and a dashed vertical marker.
function plot(canvas, series, { logX = false, logY = false, xLabel = "", yLabel = "", vline = null } = {}) {
  const ctx = canvas.getContext("2d");
  const W = canvas.width, H = canvas.height, pad = 50;
  ctx.clearRect(0, 0, W, H);
  const tx = logX ? Math.log10 : (v) => v;
  const ty = logY ? Math.log10 : (v) => v;
  const pts = series.flatMap((s) => s.points).filter(([x, y]) => isFinite(tx(x)) && isFinite(ty(y)));
  if (pts.length === 0) return;
  let [x0, x1] = [Math.min(...pts.map((p) => tx(p[0]))), Math.max(...pts.map((p) => tx(p[0])))];
  let [y0, y1] = [Math.min(...pts.map((p) => ty(p[1]))), Math.max(...pts.map((p) => ty(p[1])))];
  if (x1 === x0) x1 = x0 + 1;
  if (y1 === y0) { y0 -= 0.5; y1 += 0.5; }
  const yPad = (y1 - y0) * 0.05;
  y0 -= yPad; y1 += yPad;
  const px = (x) => pad + ((tx(x) - x0) / (x1 - x0)) * (W - 2 * pad);
  const py = (y) => H - pad + 10 - ((ty(y) - y0) / (y1 - y0)) * (H - 2 * pad);

  ctx.strokeStyle = "#888";
  ctx.fillStyle = "#444";
  ctx.font = "12px sans-serif";
  ctx.beginPath();
  ctx.moveTo(pad, pad - 10);
  ctx.lineTo(pad, H - pad + 10);
  ctx.lineTo(W - pad, H - pad + 10);
  ctx.stroke();
  const fmt = (v, log) => (log ? Number((10 ** v).toPrecision(2)).toString() : Number(v.toPrecision(3)).toString());
  for (let i = 0; i <= 4; i++) {
    const xv = x0 + ((x1 - x0) * i) / 4, yv = y0 + ((y1 - y0) * i) / 4;
    ctx.fillText(fmt(xv, logX), pad + ((W - 2 * pad) * i) / 4 - 10, H - pad + 26);
    ctx.fillText(fmt(yv, logY), 4, H - pad + 10 - ((H - 2 * pad) * i) / 4);
  }
  ctx.fillText(xLabel, W / 2 - 30, H - 6);
  ctx.fillText(yLabel, pad, pad - 20);

  if (vline !== null) {
    ctx.setLineDash([4, 4]);
    ctx.beginPath();
    ctx.moveTo(px(vline), pad - 10);
    ctx.lineTo(px(vline), H - pad + 10);
    ctx.stroke();
    ctx.setLineDash([]);
  }

  series.forEach((s, i) => {
    const color = COLORS[i % COLORS.length];
    ctx.strokeStyle = color;
    ctx.fillStyle = color;
    ctx.beginPath();
    let pen = false;
    for (const [x, y] of s.points) {
      if (!isFinite(tx(x)) || !isFinite(ty(y))) { pen = false; continue; }
      pen ? ctx.lineTo(px(x), py(y)) : ctx.moveTo(px(x), py(y));
      pen = true;
    }
    ctx.stroke();
    for (const [x, y] of s.points) {
      if (isFinite(tx(x)) && isFinite(ty(y))) ctx.fillRect(px(x) - 2, py(y) - 2, 4, 4);
    }
    ctx.fillText(s.name, W - pad - 120, pad + 14 * i);
  });
}

// Runs `work` after the browser has painted the "running" note.
function wire(id, work) {
  const sec = document.getElementById(id);
  const out = sec.querySelector(".out");
  const run = () => {
    out.className = "out";
    out.textContent = "running...";
    setTimeout(() => {
      const t = performance.now();
      try {
        const msg = work(sec, sec.querySelector("canvas"));
        out.textContent = `${msg} (${Math.round(performance.now() - t)} ms)`;
      } catch (e) {
        out.className = "out err";
        out.textContent = String(e.message ?? e);
      }
    }, 10);
  };
  sec.querySelector("button").addEventListener("click", run);
  return run;
}

await init();
document.querySelector("#bound [name=params]").value = JSON.stringify(JSON.parse(default_bound_params()));

wire("curve", (sec, canvas) => {
  const rows = JSON.parse(chunk_curve(ints(field(sec, "counts")), +field(sec, "per_class"), +field(sec, "sep"),
    +field(sec, "epochs"), field(sec, "avgs"), +field(sec, "seed")));
  const names = [...new Set(rows.map((r) => r.averager))];
  const series = names.map((n) => ({
    name: n === "none" ? "final weights" : n,
    points: rows.filter((r) => r.averager === n).map((r) => [r.n_chunks, r.test_acc]),
  }));
  plot(canvas, series, { logX: true, xLabel: "number of chunks", yLabel: "test accuracy" });
  return rows.filter((r) => r.averager === "none").map((r) => `${r.n_chunks}: ${r.test_acc.toFixed(3)}`).join(", ");
});

wire("gap", (sec, canvas) => {
  const rows = JSON.parse(gap_study(+field(sec, "d"), +field(sec, "k"), +field(sec, "seeds"), +field(sec, "noise"),
    ints(field(sec, "sizes"))));
  plot(canvas, [
    { name: "mean gap", points: rows.map((r) => [r.s, r.mean_gap]) },
    { name: "mean bound", points: rows.map((r) => [r.s, r.mean_bound ?? NaN]) },
  ], { logX: true, logY: true, xLabel: "chunk size S", yLabel: "||WA - BLR||" });
  const [a, b] = [rows[0], rows[rows.length - 1]];
  const slope = Math.log(b.mean_gap / a.mean_gap) / Math.log(b.s / a.s);
  return `gap ${a.mean_gap.toExponential(2)} at S=${a.s}, ${b.mean_gap.toExponential(2)} at S=${b.s}, slope ${slope.toFixed(2)}`;
});

const bound = wire("bound", (sec, canvas) => {
  const res = JSON.parse(bound_curve(field(sec, "params"), +field(sec, "smax"), 60));
  plot(canvas, [{ name: "bound", points: res.points.map((p) => [p.s, p.bound ?? NaN]) }],
    { logX: true, logY: true, xLabel: "chunk size S", yLabel: "bound", vline: res.min_s });
  return `applicable for S > ${res.min_s.toFixed(1)}`;
});
bound();
