/** Deterministic SVG assembly: plain string templates, fixed precision. */

export function fmt(x: number): string {
  // fixed decimals keep output byte-stable across platforms
  return x.toFixed(3).replace(/\.?0+$/, '') || '0';
}

export interface SvgDoc {
  width: number;
  height: number;
  parts: string[];
}

export function svgDoc(width: number, height: number): SvgDoc {
  return { width, height, parts: [] };
}

export function render(doc: SvgDoc): string {
  const head = `<svg xmlns="http://www.w3.org/2000/svg" width="${doc.width}" height="${doc.height}" viewBox="0 0 ${doc.width} ${doc.height}">`;
  return [head, ...doc.parts, '</svg>', ''].join('\n');
}

export function line(doc: SvgDoc, x1: number, y1: number, x2: number, y2: number, stroke: string, width = 1): void {
  doc.parts.push(
    `<line x1="${fmt(x1)}" y1="${fmt(y1)}" x2="${fmt(x2)}" y2="${fmt(y2)}" stroke="${stroke}" stroke-width="${width}"/>`,
  );
}

export function polyline(doc: SvgDoc, pts: Array<[number, number]>, stroke: string): void {
  const a = pts.map(([x, y]) => `${fmt(x)},${fmt(y)}`).join(' ');
  doc.parts.push(`<polyline points="${a}" fill="none" stroke="${stroke}" stroke-width="1.5"/>`);
}

export function circle(doc: SvgDoc, x: number, y: number, r: number, fill: string): void {
  doc.parts.push(`<circle cx="${fmt(x)}" cy="${fmt(y)}" r="${fmt(r)}" fill="${fill}"/>`);
}

export function rect(doc: SvgDoc, x: number, y: number, w: number, h: number, fill: string, stroke = 'black'): void {
  doc.parts.push(
    `<rect x="${fmt(x)}" y="${fmt(y)}" width="${fmt(w)}" height="${fmt(h)}" fill="${fill}" stroke="${stroke}" stroke-width="0.8"/>`,
  );
}

export function text(doc: SvgDoc, x: number, y: number, s: string, size = 11, anchor = 'start'): void {
  doc.parts.push(
    `<text x="${fmt(x)}" y="${fmt(y)}" font-family="sans-serif" font-size="${size}" text-anchor="${anchor}">${s}</text>`,
  );
}

export const SERIES_COLORS = ['#7b2d8b', '#1f77b4', '#d62728', '#2ca02c', '#ff7f0e', '#8c564b'];

/** log10 position scaled into [pixMin, pixMax] for a value range. */
export function logScale(min: number, max: number, pixMin: number, pixMax: number) {
  const a = Math.log10(min);
  const b = Math.log10(max);
  const span = b - a || 1;
  return (v: number) => pixMin + ((Math.log10(v) - a) / span) * (pixMax - pixMin);
}

/** Powers of ten covering [min, max]. */
export function decadeTicks(min: number, max: number): number[] {
  const out: number[] = [];
  for (let e = Math.floor(Math.log10(min)); e <= Math.ceil(Math.log10(max)); e += 1) {
    out.push(10 ** e);
  }
  return out;
}
