// Live win-confidence widget: a numeric bar for the latest engine reading
// and an SVG line graph of the whole trace. Values are from the engine's
// perspective: -1 a sure defeat, +1 a sure victory.

const WIDTH = 360;
const HEIGHT = 120;
const PAD = 8;

export class ConfidenceGraph {
  readonly element: HTMLElement;
  private svg: SVGSVGElement;
  private label: HTMLElement;

  constructor(doc: Document) {
    this.element = doc.createElement("div");
    this.element.className = "confidence";
    this.label = doc.createElement("div");
    this.label.className = "confidence-label";
    this.svg = doc.createElementNS("http://www.w3.org/2000/svg", "svg") as SVGSVGElement;
    this.svg.setAttribute("viewBox", `0 0 ${WIDTH} ${HEIGHT}`);
    this.svg.setAttribute("class", "confidence-graph");
    this.element.appendChild(this.label);
    this.element.appendChild(this.svg);
  }

  private y(value: number): number {
    return PAD + ((1 - value) / 2) * (HEIGHT - 2 * PAD);
  }

  render(trace: number[]): void {
    const doc = this.element.ownerDocument;
    while (this.svg.firstChild) this.svg.removeChild(this.svg.firstChild);

    const axis = doc.createElementNS("http://www.w3.org/2000/svg", "line");
    axis.setAttribute("x1", String(PAD));
    axis.setAttribute("x2", String(WIDTH - PAD));
    axis.setAttribute("y1", String(this.y(0)));
    axis.setAttribute("y2", String(this.y(0)));
    axis.setAttribute("class", "confidence-axis");
    this.svg.appendChild(axis);

    const step =
      trace.length > 1 ? (WIDTH - 2 * PAD) / (trace.length - 1) : 0;
    const points = trace
      .map((v, i) => `${PAD + i * step},${this.y(v)}`)
      .join(" ");
    if (trace.length > 1) {
      const line = doc.createElementNS("http://www.w3.org/2000/svg", "polyline");
      line.setAttribute("points", points);
      line.setAttribute("class", "confidence-line");
      line.setAttribute("fill", "none");
      this.svg.appendChild(line);
    }
    for (let i = 0; i < trace.length; i++) {
      const dot = doc.createElementNS("http://www.w3.org/2000/svg", "circle");
      dot.setAttribute("cx", String(PAD + i * step));
      dot.setAttribute("cy", String(this.y(trace[i])));
      dot.setAttribute("r", "2.5");
      dot.setAttribute("class", "confidence-point");
      this.svg.appendChild(dot);
    }
    const latest = trace.length ? trace[trace.length - 1] : null;
    this.label.textContent =
      latest === null
        ? "Engine confidence: no reading yet"
        : `Engine confidence: ${latest >= 0 ? "+" : ""}${latest.toFixed(3)}`;
  }

  pointCount(): number {
    return this.svg.querySelectorAll("circle").length;
  }
}
