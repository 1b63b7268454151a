import init, { glyph, cropOffsets, cropTiles, focalCurve } from "./pkg/hcr_web.js";

const $ = (id) => document.getElementById(id);

function drawGray(canvas, pixels, side, scale = 3) {
  canvas.width = side;
  canvas.height = side;
  canvas.style.width = `${side * scale}px`;
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(side, side);
  for (let i = 0; i < pixels.length; i++) {
    img.data.set([pixels[i], pixels[i], pixels[i], 255], 4 * i);
  }
  ctx.putImageData(img, 0, 0);
}

function guarded(errorId, fn) {
  return () => {
    $(errorId).textContent = "";
    try {
      fn();
    } catch (e) {
      $(errorId).textContent = e.message ?? String(e);
    }
  };
}

const renderGlyph = guarded("g-error", () => {
  const label = Number($("g-label").value);
  const seed = Number($("g-seed").value);
  const [side, sigma] = $("g-blur").value.split(",").map(Number);
  drawGray($("g-raw"), glyph(label, 64, seed, 1, 1), 64);
  drawGray($("g-out"), glyph(label, 64, seed, side, sigma), 64);
});

const renderCrops = guarded("c-error", () => {
  const resize = Number($("c-resize").value);
  const crop = Number($("c-crop").value);
  const offsets = cropOffsets(resize, crop);
  const pairs = [];
  for (let i = 0; i < offsets.length; i += 2) pairs.push(`(${offsets[i]}, ${offsets[i + 1]})`);
  $("c-offsets").textContent = `offsets (row, col): ${pairs.join(" ")}`;
  const tiles = cropTiles(Number($("g-label").value), Number($("g-seed").value), resize, crop);
  const holder = $("c-tiles");
  holder.replaceChildren();
  const scale = 160 / resize;
  const full = document.createElement("canvas");
  drawGray(full, tiles.subarray(0, resize * resize), resize, scale);
  const ctx = full.getContext("2d");
  ctx.strokeStyle = "rgba(200, 0, 0, 0.8)";
  for (let i = 0; i < offsets.length; i += 2) ctx.strokeRect(offsets[i + 1] + 0.5, offsets[i] + 0.5, crop - 1, crop - 1);
  holder.append(full);
  for (let k = 0; k < 5; k++) {
    const c = document.createElement("canvas");
    const start = resize * resize + k * crop * crop;
    drawGray(c, tiles.subarray(start, start + crop * crop), crop, 100 / crop);
    holder.append(c);
  }
});

function plot(ctx, curve, color, yMax, w, h) {
  ctx.strokeStyle = color;
  ctx.beginPath();
  for (let i = 0; i < curve.length; i += 2) {
    const x = curve[i] * w;
    const y = h - Math.min(curve[i + 1] / yMax, 1) * h;
    i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y);
  }
  ctx.stroke();
}

const renderFocal = guarded("f-error", () => {
  const gamma = Number($("f-gamma").value);
  $("f-value").textContent = gamma;
  const canvas = $("f-plot");
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const reference = focalCurve(0, 200);
  const yMax = 3;
  plot(ctx, reference, "#aaa", yMax, w, h);
  ctx.lineWidth = 2;
  plot(ctx, focalCurve(gamma, 200), "#c30", yMax, w, h);
  ctx.lineWidth = 1;
  ctx.fillStyle = "#555";
  ctx.fillText("p_t = 0", 2, h - 4);
  ctx.fillText("p_t = 1", w - 40, h - 4);
  ctx.fillText(`loss (0..${yMax})`, 2, 12);
});

await init();
for (const id of ["g-label", "g-seed", "g-blur"]) {
  $(id).addEventListener("input", renderGlyph);
  $(id).addEventListener("input", renderCrops);
}
for (const id of ["c-resize", "c-crop"]) $(id).addEventListener("input", renderCrops);
$("f-gamma").addEventListener("input", renderFocal);
renderGlyph();
renderCrops();
renderFocal();
