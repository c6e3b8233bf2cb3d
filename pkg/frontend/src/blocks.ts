import { join } from 'path';
import { column, numeric, readCsv, SchemaError } from './csv';
import { fmt, rect, render, svgDoc, text } from './svg';

interface Block {
  id: number;
  kind: string;
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

export function readBlocks(inputDir: string): Block[] {
  const file = join(inputDir, 'blocks.csv');
  const t = readCsv(file);
  const ii = column(t, 'id', file);
  const ik = column(t, 'kind', file);
  const ix0 = column(t, 'x0', file);
  const iy0 = column(t, 'y0', file);
  const ix1 = column(t, 'x1', file);
  const iy1 = column(t, 'y1', file);
  return t.rows.map((r) => ({
    id: Math.trunc(numeric(r[ii], file)),
    kind: r[ik],
    x0: numeric(r[ix0], file),
    y0: numeric(r[iy0], file),
    x1: numeric(r[ix1], file),
    y1: numeric(r[iy1], file),
  }));
}

/** Refined block ids of the finally selected surrogate (last models.csv row). */
export function readRefinedBlocks(inputDir: string): Set<number> {
  const file = join(inputDir, 'models.csv');
  const t = readCsv(file);
  column(t, 'model_id', file);
  const ir = column(t, 'refined_blocks', file);
  if (t.rows.length === 0) throw new SchemaError(`${file} has no data rows`);
  const last = t.rows[t.rows.length - 1][ir];
  const out = new Set<number>();
  if (last.trim().length > 0) {
    for (const s of last.split(';')) out.add(Math.trunc(Number(s)));
  }
  return out;
}

/** Partition map with the refined blocks of the selected surrogate filled. */
export function blockPatternSvg(inputDir: string): string {
  const blocks = readBlocks(inputDir);
  const refined = readRefinedBlocks(inputDir);
  const x0 = Math.min(...blocks.map((b) => b.x0));
  const x1 = Math.max(...blocks.map((b) => b.x1));
  const y0 = Math.min(...blocks.map((b) => b.y0));
  const y1 = Math.max(...blocks.map((b) => b.y1));
  const scale = 480 / Math.max(x1 - x0, y1 - y0);
  const margin = 30;
  const W = margin * 2 + (x1 - x0) * scale;
  const H = margin * 2 + (y1 - y0) * scale + 20;
  const doc = svgDoc(Math.ceil(W), Math.ceil(H));
  const px = (x: number) => margin + (x - x0) * scale;
  const py = (y: number) => margin + (y1 - y) * scale; // y up

  for (const b of blocks) {
    const fill = refined.has(b.id) ? '#b06ac1' : 'white';
    if (b.kind === 'fillet') {
      // staircase square marked with a diagonal hatch color when refined
      rect(doc, px(b.x0), py(b.y1), (b.x1 - b.x0) * scale, (b.y1 - b.y0) * scale, fill, '#666666');
      doc.parts.push(
        `<path d="M ${fmt(px(b.x0))} ${fmt(py(b.y1))} L ${fmt(px(b.x1))} ${fmt(py(b.y0))}" stroke="#666666" stroke-width="0.8" fill="none"/>`,
      );
    } else {
      rect(doc, px(b.x0), py(b.y1), (b.x1 - b.x0) * scale, (b.y1 - b.y0) * scale, fill);
    }
  }
  text(doc, margin, H - 8, `${refined.size} of ${blocks.length} blocks resolved`, 11);
  return render(doc);
}
