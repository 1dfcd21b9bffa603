import init, { partialDemo, scoreTags, downsampleDemo } from "./pkg/fluency_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const fmt = (x) => (x === null || x === undefined ? "undefined" : x.toFixed(4));

function plot(points) {
  const c = $("pc-plot");
  const ctx = c.getContext("2d");
  ctx.clearRect(0, 0, c.width, c.height);
  if (!points.length) return;
  const xs = points.map((p) => p.fluency);
  const ys = points.map((p) => p.comet);
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  const [y0, y1] = [Math.min(...ys), Math.max(...ys)];
  const maxWords = Math.max(...points.map((p) => p.words));
  for (const p of points) {
    const x = 10 + ((p.fluency - x0) / (x1 - x0 || 1)) * (c.width - 20);
    const y = c.height - 10 - ((p.comet - y0) / (y1 - y0 || 1)) * (c.height - 20);
    const shade = Math.round(200 * (1 - p.words / maxWords));
    ctx.fillStyle = `rgb(${shade}, ${shade}, 255)`;
    ctx.fillRect(x - 1.5, y - 1.5, 3, 3);
  }
  ctx.fillStyle = "#555";
  ctx.fillText("fluency →", c.width - 70, c.height - 2);
  ctx.fillText("adequacy ↑ (darker = longer)", 4, 10);
}

function runPartial() {
  const r = JSON.parse(partialDemo(num("pc-n"), num("pc-a"), num("pc-b"), num("pc-noise"), num("pc-seed")));
  $("pc-out").textContent =
    `n = ${r.n}\n` +
    `spearman(fluency, adequacy)      = ${fmt(r.rho_fluency_comet)}\n` +
    `spearman(length, adequacy)       = ${fmt(r.rho_length_comet)}\n` +
    `spearman(length, fluency)        = ${fmt(r.rho_length_fluency)}\n` +
    `partial(fluency, adequacy | len) = ${fmt(r.partial_rho)}  (p = ${r.partial_p?.toExponential(2)})`;
  plot(r.points);
}

function runScore() {
  const r = JSON.parse(scoreTags($("sc-tags").value));
  const top = r.top.map((c) => `  ${c.weight >= 0 ? "+" : ""}${c.weight.toFixed(3)}  ${c.gram}`).join("\n");
  $("sc-out").textContent =
    `${r.n_tags} tags, ${r.grams_in_vocabulary} known n-grams\n` +
    `P(translated) = ${r.p_translated.toFixed(4)}   fluency = ${r.fluency.toFixed(4)}\n` +
    `largest contributions (positive = more translated-like):\n${top}`;
}

function runDownsample() {
  const r = JSON.parse(downsampleDemo(num("ds-k"), num("ds-seed")));
  if (r.error) {
    $("ds-out").textContent = r.error;
    $("ds-table").innerHTML = "";
    return;
  }
  $("ds-out").textContent =
    `${r.n_bins} bins; translated ${r.n_translated_before} → ${r.n_translated_after} against ${r.n_original} originals`;
  const max = Math.max(...r.bins.map((b) => Math.max(b.original, b.available)));
  const bar = (n, color) => `<span style="display:inline-block;height:.7em;width:${(120 * n) / max}px;background:${color}"></span>`;
  $("ds-table").innerHTML =
    "<tr><th>words</th><th>original</th><th>available</th><th>kept</th><th></th></tr>" +
    r.bins
      .map((b) => `<tr><td>${b.label}</td><td>${b.original}</td><td>${b.available}</td><td>${b.kept}</td>` +
        `<td style="text-align:left">${bar(b.available, "#ddd")}<br>${bar(b.kept, "#46c")}</td></tr>`)
      .join("");
}

await init();
$("pc-run").onclick = runPartial;
$("sc-run").onclick = runScore;
$("ds-run").onclick = runDownsample;
runPartial();
runDownsample();
