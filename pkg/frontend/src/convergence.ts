import { join } from 'path';
import { column, numeric, readCsv, SchemaError } from './csv';
import {
  circle,
  decadeTicks,
  line,
  logScale,
  polyline,
  render,
  SERIES_COLORS,
  svgDoc,
  text,
} from './svg';

interface Point {
  work: number;
  rmse: number;
  tol: number;
}

/** Log-log RMSE versus work, one series per (method, L). */
export function convergenceSvg(inputDir: string): string {
  const file = join(inputDir, 'convergence.csv');
  const table = readCsv(file);
  const iMethod = column(table, 'method', file);
  const iL = column(table, 'L', file);
  const iTol = column(table, 'tol', file);
  const iRmse = column(table, 'rmse', file);
  const iWork = column(table, 'work_mean', file);
  if (table.rows.length === 0) {
    throw new SchemaError(`${file} has no data rows`);
  }

  const series = new Map<string, Point[]>();
  for (const row of table.rows) {
    const key = `${row[iMethod]} L=${row[iL]}`;
    const pt = {
      work: numeric(row[iWork], file),
      rmse: numeric(row[iRmse], file),
      tol: numeric(row[iTol], file),
    };
    if (pt.work <= 0 || pt.rmse <= 0) throw new SchemaError(`${file}: non-positive point`);
    if (!series.has(key)) series.set(key, []);
    series.get(key)!.push(pt);
  }
  for (const pts of series.values()) pts.sort((a, b) => b.tol - a.tol);

  const all = [...series.values()].flat();
  const wMin = Math.min(...all.map((p) => p.work));
  const wMax = Math.max(...all.map((p) => p.work));
  const rMin = Math.min(...all.map((p) => p.rmse));
  const rMax = Math.max(...all.map((p) => p.rmse));

  const W = 560;
  const H = 420;
  const ml = 70;
  const mr = 20;
  const mt = 24;
  const mb = 52;
  const doc = svgDoc(W, H);
  const sx = logScale(wMin / 1.5, wMax * 1.5, ml, W - mr);
  const sy = logScale(rMin / 1.5, rMax * 1.5, H - mb, mt);

  line(doc, ml, H - mb, W - mr, H - mb, 'black');
  line(doc, ml, mt, ml, H - mb, 'black');
  for (const t of decadeTicks(wMin / 1.5, wMax * 1.5)) {
    const x = sx(t);
    if (x < ml - 1 || x > W - mr + 1) continue;
    line(doc, x, H - mb, x, H - mb + 5, 'black');
    text(doc, x, H - mb + 18, `1e${Math.round(Math.log10(t))}`, 10, 'middle');
  }
  for (const t of decadeTicks(rMin / 1.5, rMax * 1.5)) {
    const y = sy(t);
    if (y < mt - 1 || y > H - mb + 1) continue;
    line(doc, ml - 5, y, ml, y, 'black');
    text(doc, ml - 8, y + 3, `1e${Math.round(Math.log10(t))}`, 10, 'end');
  }
  text(doc, (ml + W - mr) / 2, H - 14, 'work (dof units)', 12, 'middle');
  text(doc, 16, mt - 8, 'rmse', 12);

  const keys = [...series.keys()].sort();
  keys.forEach((key, k) => {
    const color = SERIES_COLORS[k % SERIES_COLORS.length];
    const pts = series.get(key)!;
    polyline(doc, pts.map((p) => [sx(p.work), sy(p.rmse)]), color);
    for (const p of pts) circle(doc, sx(p.work), sy(p.rmse), 3.2, color);
    const lx = ml + 12;
    const ly = mt + 14 + 16 * k;
    line(doc, lx, ly - 4, lx + 22, ly - 4, color, 2);
    text(doc, lx + 28, ly, key, 11);
  });
  return render(doc);
}
