/** Inline SVG charts rendered straight from the payload proportions. */

const SVG_NS = "http://www.w3.org/2000/svg";

function svgElement<K extends keyof SVGElementTagNameMap>(
  tag: K,
  attrs: Record<string, string>,
): SVGElementTagNameMap[K] {
  const el = document.createElementNS(SVG_NS, tag);
  for (const [key, value] of Object.entries(attrs)) {
    el.setAttribute(key, value);
  }
  return el;
}

/** Two-slice pie for a single proportion in [0, 1]. */
export function pieChart(proportion: number, size = 120): SVGSVGElement {
  const p = Math.max(0, Math.min(1, proportion));
  const radius = size / 2 - 2;
  const cx = size / 2;
  const cy = size / 2;
  const svg = svgElement("svg", {
    width: String(size),
    height: String(size),
    viewBox: `0 0 ${size} ${size}`,
    role: "img",
    class: "pie-chart",
  });
  svg.appendChild(
    svgElement("circle", {
      cx: String(cx),
      cy: String(cy),
      r: String(radius),
      fill: "#e8e3da",
    }),
  );
  if (p >= 0.999) {
    svg.appendChild(
      svgElement("circle", {
        cx: String(cx),
        cy: String(cy),
        r: String(radius),
        fill: "#4c7a6c",
        class: "pie-slice",
      }),
    );
  } else if (p > 0.001) {
    const angle = 2 * Math.PI * p;
    const x = cx + radius * Math.sin(angle);
    const y = cy - radius * Math.cos(angle);
    const largeArc = p > 0.5 ? 1 : 0;
    svg.appendChild(
      svgElement("path", {
        d:
          `M ${cx} ${cy} L ${cx} ${cy - radius} ` +
          `A ${radius} ${radius} 0 ${largeArc} 1 ${x.toFixed(3)} ${y.toFixed(3)} Z`,
        fill: "#4c7a6c",
        class: "pie-slice",
      }),
    );
  }
  const text = svgElement("text", {
    x: String(cx),
    y: String(cy + 4),
    "text-anchor": "middle",
    class: "pie-label",
  });
  text.textContent = `${Math.round(p * 100)}%`;
  svg.appendChild(text);
  return svg;
}

/** Vertical bars for proportions in [0, 1], one per age band. */
export function barChart(
  values: number[],
  labels: string[],
  width = 260,
  height = 120,
): SVGSVGElement {
  const svg = svgElement("svg", {
    width: String(width),
    height: String(height),
    viewBox: `0 0 ${width} ${height}`,
    role: "img",
    class: "bar-chart",
  });
  const labelBand = 16;
  const plotHeight = height - labelBand - 4;
  const slot = width / values.length;
  const barWidth = slot * 0.62;
  values.forEach((value, i) => {
    const v = Math.max(0, Math.min(1, value));
    const barHeight = v * plotHeight;
    svg.appendChild(
      svgElement("rect", {
        x: String(i * slot + (slot - barWidth) / 2),
        y: String(4 + plotHeight - barHeight),
        width: String(barWidth),
        height: String(barHeight),
        fill: "#5b7fa6",
        class: "bar",
        "data-value": v.toFixed(3),
      }),
    );
    const label = svgElement("text", {
      x: String(i * slot + slot / 2),
      y: String(height - 4),
      "text-anchor": "middle",
      class: "bar-label",
    });
    label.textContent = labels[i] ?? "";
    svg.appendChild(label);
  });
  return svg;
}
