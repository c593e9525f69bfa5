import init, { Demo } from "./pkg/trajsynth_demo.js";

const $ = (id) => document.getElementById(id);
const SCALE = 1;

await init();
$("status").textContent = "Estimating the chain from toy logs...";
await new Promise((r) => setTimeout(r, 0));
const demo = new Demo(40, 2, 0);
$("status").textContent = "Ready.";

function draw() {
  const w = demo.width(), h = demo.height();
  if (!w) return;
  const canvas = $("scene");
  canvas.width = w;
  canvas.height = h;
  const img = new ImageData(new Uint8ClampedArray(demo.pixels()), w, h);
  canvas.getContext("2d").putImageData(img, 0, 0);
}

function generate() {
  demo.set_ablations($("noise").checked, $("shift").checked, $("unreachable").checked, Number($("branching").value));
  try {
    const s = JSON.parse(demo.generate(Number($("seed").value), SCALE));
    $("summary").textContent =
      `futures: ${s.futures}${s.fewer_futures ? " (fewer than drawn)" : ""}\n` +
      `branch points: ${s.branch_indices.map((b) => (b === null ? "-" : b)).join(", ")}\n` +
      `lane shift: ${s.shift.toFixed(2)} m`;
    $("scores").innerHTML = "";
    $("loss").textContent = "";
    draw();
  } catch (e) {
    $("summary").textContent = String(e);
  }
}

function predict() {
  const p = JSON.parse(demo.predict(SCALE));
  if (!p) return;
  const rows = p.baselines
    .map((b) => `<tr><td>${b.name}</td><td>${b.matched_future}</td><td>${b.ade.toFixed(2)}</td><td>${b.fde.toFixed(2)}</td></tr>`)
    .join("");
  $("scores").innerHTML = `<tr><th>baseline</th><th>future</th><th>ADE</th><th>FDE</th></tr>${rows}`;
  $("loss").textContent = `multimodality loss: ${p.multimodality_loss.toFixed(3)} m²`;
  draw();
}

function walk() {
  const pts = demo.walk(Number($("seed").value), Number($("steps").value));
  const canvas = $("walk");
  const ctx = canvas.getContext("2d");
  ctx.fillStyle = "#000";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  let [x0, x1, y0, y1] = [Infinity, -Infinity, Infinity, -Infinity];
  for (let i = 0; i < pts.length; i += 2) {
    x0 = Math.min(x0, pts[i]); x1 = Math.max(x1, pts[i]);
    y0 = Math.min(y0, pts[i + 1]); y1 = Math.max(y1, pts[i + 1]);
  }
  const span = Math.max(x1 - x0, y1 - y0, 1);
  const k = (canvas.width - 20) / span;
  const cx = (x0 + x1) / 2, cy = (y0 + y1) / 2;
  ctx.strokeStyle = "#e61e1e";
  ctx.beginPath();
  for (let i = 0; i < pts.length; i += 2) {
    const x = canvas.width / 2 + (pts[i] - cx) * k;
    const y = canvas.height / 2 - (pts[i + 1] - cy) * k;
    i ? ctx.lineTo(x, y) : ctx.moveTo(x, y);
  }
  ctx.stroke();
}

$("generate").onclick = generate;
$("next").onclick = () => { $("seed").value = Number($("seed").value) + 1; generate(); };
$("predict").onclick = predict;
$("walkbtn").onclick = walk;
generate();
walk();
