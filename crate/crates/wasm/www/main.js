import init, { occupations, scf, sweep } from "./pkg/mks_wasm.js";

const DEFAULT_CONFIG = `# Three Gaussian wells in a 10 bohr chain, Hartree + Dirac exchange.
name = "demo"

[cell]
dimension = 1
length = 10.0

[basis]
cutoff = 20.0
cutoffs = [10.0, 15.0, 20.0, 25.0, 30.0]
reference = 80.0

[electrons]
count = 3
beta = 100.0

[potential]
kind = "gaussian_wells"

[[potential.wells]]
center = [1.7]
depth = 3.0
width = 0.6

[[potential.wells]]
center = [5.1]
depth = 2.5
width = 0.65

[[potential.wells]]
center = [8.0]
depth = 3.5
width = 0.55

[interactions]
hartree = true
xc = "dirac"

[scf]
mixing = "anderson"
alpha = 0.5
tol_rho = 1e-11
tol_f = 1e-12
`;

const $ = (id) => document.getElementById(id);

function fail(el, e) {
  el.className = "out err";
  el.textContent = String(e);
}

function ok(el, text) {
  el.className = "out";
  el.textContent = text;
}

// Line plot of several series sharing one x range; `log` plots log10 of y.
function plot(canvas, series, { log = false, xlabel = "", ylabel = "" } = {}) {
  const ctx = canvas.getContext("2d");
  const W = canvas.width, H = canvas.height, m = { l: 60, r: 15, t: 15, b: 35 };
  ctx.clearRect(0, 0, W, H);
  const ty = (y) => (log ? Math.log10(y) : y);
  const pts = series.flatMap((s) => s.x.map((x, i) => [x, ty(s.y[i])])).filter(([, y]) => Number.isFinite(y));
  if (pts.length === 0) return;
  let [x0, x1] = [Math.min(...pts.map((p) => p[0])), Math.max(...pts.map((p) => p[0]))];
  let [y0, y1] = [Math.min(...pts.map((p) => p[1])), Math.max(...pts.map((p) => p[1]))];
  if (x1 === x0) x1 = x0 + 1;
  if (y1 === y0) { y0 -= 0.5; y1 += 0.5; }
  const pad = 0.05 * (y1 - y0);
  y0 -= pad; y1 += pad;
  const px = (x) => m.l + ((x - x0) / (x1 - x0)) * (W - m.l - m.r);
  const py = (y) => H - m.b - ((y - y0) / (y1 - y0)) * (H - m.t - m.b);

  ctx.strokeStyle = "#999"; ctx.fillStyle = "#444"; ctx.font = "11px sans-serif";
  ctx.strokeRect(m.l, m.t, W - m.l - m.r, H - m.t - m.b);
  for (let k = 0; k <= 4; k++) {
    const x = x0 + (k / 4) * (x1 - x0), y = y0 + (k / 4) * (y1 - y0);
    ctx.fillText(x.toPrecision(3), px(x) - 12, H - m.b + 14);
    ctx.fillText(log ? `1e${y.toFixed(1)}` : y.toPrecision(3), 4, py(y) + 4);
  }
  ctx.fillText(xlabel, W / 2, H - 6);
  ctx.save(); ctx.translate(12, H / 2); ctx.rotate(-Math.PI / 2); ctx.fillText(ylabel, 0, 0); ctx.restore();

  series.forEach((s, k) => {
    ctx.strokeStyle = ctx.fillStyle = s.color;
    ctx.setLineDash(s.dash ?? []);
    ctx.beginPath();
    let started = false;
    s.x.forEach((x, i) => {
      const y = ty(s.y[i]);
      if (!Number.isFinite(y)) return;
      if (s.dots) { ctx.fillRect(px(x) - 3, py(y) - 3, 6, 6); }
      if (started) ctx.lineTo(px(x), py(y)); else { ctx.moveTo(px(x), py(y)); started = true; }
    });
    if (!s.dots || s.line) ctx.stroke();
    ctx.setLineDash([]);
    ctx.fillText(s.label, W - m.r - 150, m.t + 14 + 14 * k);
  });
}

function runOccupations() {
  const beta = 10 ** Number($("occ-beta").value);
  $("occ-beta-text").textContent = `β = ${beta.toPrecision(3)}`;
  try {
    const levels = $("occ-levels").value.split(",").map(Number);
    const r = JSON.parse(occupations(Float64Array.from(levels), Number($("occ-n").value), beta));
    plot($("occ-plot"), [
      { x: r.curve.map((p) => p[0]), y: r.curve.map((p) => p[1]), color: "#1f77b4", label: "f(ε)" },
      { x: levels, y: r.occupations, color: "#d62728", dots: true, label: "levels" },
    ], { xlabel: "ε (Ha)", ylabel: "occupation" });
    ok($("occ-out"), `μ = ${r.mu.toFixed(8)}   f = ${r.occupations.map((f) => f.toFixed(6)).join(", ")}`);
  } catch (e) {
    fail($("occ-out"), e);
  }
}

function runScf() {
  try {
    const r = JSON.parse(scf($("scf-config").value, Number($("scf-cutoff").value), Number($("scf-beta").value)));
    plot($("scf-plot"), [
      { x: r.x, y: r.density, color: "#1f77b4", label: "density ρ(x)" },
      { x: r.x, y: r.potential, color: "#2ca02c", dash: [5, 4], label: "effective potential" },
    ], { xlabel: "x (bohr)" });
    const occ = r.occupations.map((f, i) => `${r.eigenvalues[i].toFixed(5)}:${f.toFixed(4)}`).slice(0, 8);
    ok($("scf-out"),
      `${r.converged ? "converged" : "NOT converged"} in ${r.iterations} iterations, ${r.basis_size} plane waves\n` +
      `F = ${r.free_energy.toFixed(12)}   μ = ${r.mu.toFixed(8)}\nε:f  ${occ.join("  ")}`);
  } catch (e) {
    fail($("scf-out"), e);
  }
}

const cell = (v) => (typeof v !== "number" ? "—" : Number.isInteger(v) ? String(v) : v.toPrecision(6));

function runSweep() {
  const out = $("sweep-out");
  ok(out, "running…");
  // let the status paint before the solver blocks the thread
  setTimeout(() => {
    try {
      const r = JSON.parse(sweep($("scf-config").value, Number($("sweep-beta").value)));
      const ec = r.rows.map((row) => row.ec);
      const s = r.summary;
      const series = [
        { x: ec, y: r.rows.map((row) => row.f_err), color: "#1f77b4", dots: true, line: true, label: "|F - F_ref|" },
        { x: ec, y: r.rows.map((row) => row.rho_l2_err), color: "#ff7f0e", dots: true, line: true, label: "‖ρ - ρ_ref‖" },
        { x: ec, y: r.rows.map((row) => row.gamma_s11_err), color: "#9467bd", dots: true, line: true, label: "‖Γ - Γ_ref‖ S11" },
      ];
      if (s.model === "exponential") {
        series.push({ x: ec, y: ec.map((e) => Math.exp(s.intercept + s.slope * e)), color: "#1f77b4", dash: [4, 4], label: "exp fit" });
      }
      plot($("sweep-plot"), series, { log: true, xlabel: "cutoff (Ha)", ylabel: "error" });
      ok(out,
        `energy fit: ${s.model}, slope ${s.slope?.toPrecision(4)}, R² ${s.r2?.toFixed(4)}   ` +
        `density fit: R² ${s.density_fit.r2?.toFixed(4)}\n` +
        `monotone: ${r.monotone}   max ratio ${s.max_ratio?.toFixed(4)}   λ_min ${s.a4.lambda_min.toFixed(6)}`);
      const cols = ["ec", "f_total", "f_err", "rho_l2_err", "gamma_s11_err", "ratio", "scf_iters"];
      $("sweep-table").innerHTML =
        `<tr>${cols.map((c) => `<th>${c}</th>`).join("")}</tr>` +
        r.rows.map((row) => `<tr>${cols.map((c) => `<td>${cell(row[c])}</td>`).join("")}</tr>`).join("");
    } catch (e) {
      fail(out, e);
    }
  }, 20);
}

await init();
$("scf-config").value = DEFAULT_CONFIG;
for (const id of ["occ-levels", "occ-n", "occ-beta"]) $(id).addEventListener("input", runOccupations);
$("scf-run").addEventListener("click", runScf);
$("sweep-run").addEventListener("click", runSweep);
runOccupations();
runScf();
