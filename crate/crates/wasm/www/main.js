import init, { fixture_names, fixture, tile, analyze, simulate } from "./pkg/smocklab_wasm.js";

const $ = (id) => document.getElementById(id);
const canvas = $("view");
const ctx = canvas.getContext("2d");
let pattern = null;
let mesh = null;
let yaw = 0.6, pitch = 0.9;

function status(text) { $("status").textContent = text; }

function attempt(f) {
  try { f(); } catch (e) { status("error: " + e); }
}

function load() {
  pattern = fixture($("fixture").value);
  mesh = null;
  status("unit cell loaded");
  draw();
}

function project(x, y, z, cx, cy, cz, scale) {
  const [dx, dy, dz] = [x - cx, y - cy, z - cz];
  const x1 = Math.cos(yaw) * dx - Math.sin(yaw) * dy;
  const y1 = Math.sin(yaw) * dx + Math.cos(yaw) * dy;
  const y2 = Math.cos(pitch) * y1 - Math.sin(pitch) * dz;
  const depth = Math.sin(pitch) * y1 + Math.cos(pitch) * dz;
  return [canvas.width / 2 + scale * x1, canvas.height / 2 - scale * y2, depth];
}

function bounds(coords, dim) {
  const lo = Array(dim).fill(Infinity), hi = Array(dim).fill(-Infinity);
  for (let i = 0; i < coords.length; i++) {
    const k = i % dim;
    lo[k] = Math.min(lo[k], coords[i]);
    hi[k] = Math.max(hi[k], coords[i]);
  }
  return [lo, hi];
}

function drawPattern(p) {
  const verts = [];
  const lines = p.lines;
  if (p.grid.kind === "explicit") {
    p.vertices.forEach((v) => verts.push(v[0], v[1]));
  } else {
    const s = p.grid.spacing ?? 1;
    for (let r = 0; r <= p.grid.rows; r++) for (let c = 0; c <= p.grid.cols; c++) verts.push(c * s, r * s);
  }
  const [lo, hi] = bounds(verts, 2);
  const scale = 0.8 * Math.min(canvas.width / (hi[0] - lo[0] || 1), canvas.height / (hi[1] - lo[1] || 1));
  const at = (v) => [canvas.width / 2 + scale * (verts[2 * v] - (lo[0] + hi[0]) / 2),
                     canvas.height / 2 - scale * (verts[2 * v + 1] - (lo[1] + hi[1]) / 2)];
  ctx.fillStyle = "#999";
  for (let v = 0; v < verts.length / 2; v++) {
    const [x, y] = at(v);
    ctx.fillRect(x - 1.5, y - 1.5, 3, 3);
  }
  ctx.strokeStyle = "#c0392b";
  ctx.lineWidth = 3;
  for (const line of lines) {
    if (typeof line[0] !== "number") continue;
    ctx.beginPath();
    line.forEach((v, i) => { const [x, y] = at(v); i ? ctx.lineTo(x, y) : ctx.moveTo(x, y); });
    ctx.stroke();
  }
}

function drawMesh(m) {
  const [lo, hi] = bounds(m.vertices, 3);
  const c = [0, 1, 2].map((k) => (lo[k] + hi[k]) / 2);
  const scale = 0.7 * Math.min(canvas.width, canvas.height) / Math.max(hi[0] - lo[0], hi[1] - lo[1], 1e-9);
  const pts = [];
  for (let i = 0; i < m.vertices.length; i += 3) pts.push(project(m.vertices[i], m.vertices[i + 1], m.vertices[i + 2], ...c, scale));
  const [hlo, hhi] = [Math.min(...m.heights), Math.max(...m.heights)];
  const faces = [];
  for (let f = 0; f < m.faces.length; f += 3) {
    const idx = [m.faces[f], m.faces[f + 1], m.faces[f + 2]];
    faces.push({ idx, depth: idx.reduce((s, v) => s + pts[v][2], 0) });
  }
  faces.sort((a, b) => a.depth - b.depth);
  ctx.lineWidth = 0.5;
  for (const { idx } of faces) {
    const h = idx.reduce((s, v) => s + m.heights[v], 0) / 3;
    const t = hhi > hlo ? (h - hlo) / (hhi - hlo) : 0;
    ctx.fillStyle = `rgb(${Math.round(90 + 160 * t)}, ${Math.round(110 + 60 * t)}, ${Math.round(200 - 120 * t)})`;
    ctx.strokeStyle = "rgba(0,0,0,0.25)";
    ctx.beginPath();
    idx.forEach((v, i) => (i ? ctx.lineTo(pts[v][0], pts[v][1]) : ctx.moveTo(pts[v][0], pts[v][1])));
    ctx.closePath();
    ctx.fill();
    ctx.stroke();
  }
}

function draw() {
  canvas.width = canvas.clientWidth;
  canvas.height = canvas.clientHeight;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (mesh) drawMesh(mesh);
  else if (pattern) drawPattern(JSON.parse(pattern));
}

let drag = null;
canvas.addEventListener("pointerdown", (e) => { drag = [e.clientX, e.clientY]; });
window.addEventListener("pointerup", () => { drag = null; });
window.addEventListener("pointermove", (e) => {
  if (!drag || !mesh) return;
  yaw += (e.clientX - drag[0]) * 0.01;
  pitch = Math.min(Math.PI / 2, Math.max(0, pitch + (e.clientY - drag[1]) * 0.01));
  drag = [e.clientX, e.clientY];
  draw();
});
window.addEventListener("resize", draw);

$("fixture").addEventListener("change", () => attempt(load));
$("tile").addEventListener("click", () => attempt(() => {
  pattern = tile(pattern, Number($("rx").value), Number($("ry").value), 0);
  mesh = null;
  status(`tiled: ${JSON.parse(pattern).lines.length} stitching lines`);
  draw();
}));
$("analyze").addEventListener("click", () => attempt(() => status(analyze(pattern))));
$("simulate").addEventListener("click", () => attempt(() => {
  status("simulating...");
  setTimeout(() => attempt(() => {
    const t = performance.now();
    mesh = JSON.parse(simulate(pattern));
    status(`${mesh.converged ? "converged" : "not converged"}: ${mesh.vertices.length / 3} vertices, ` +
           `${mesh.faces.length / 3} faces in ${Math.round(performance.now() - t)} ms\ndrag to rotate`);
    draw();
  }), 10);
}));

await init();
for (const name of fixture_names().split(",")) {
  const o = document.createElement("option");
  o.value = o.textContent = name;
  $("fixture").append(o);
}
attempt(load);
