import { readFileSync } from 'fs';

export const SCHEMA_LINE = '# schema=1';

export class SchemaError extends Error {}

export class MissingColumn extends Error {
  constructor(public readonly column: string, file: string) {
    super(`missing column '${column}' in ${file}`);
  }
}

export interface Table {
  columns: string[];
  rows: string[][];
}

/** Read a schema=1 CSV: comment header, column header, then data rows. */
export function readCsv(path: string): Table {
  let text: string;
  try {
    text = readFileSync(path, 'utf-8');
  } catch {
    throw new SchemaError(`cannot read ${path}`);
  }
  const lines = text.split('\n').filter((l) => l.length > 0);
  if (lines.length < 2 || lines[0].trim() !== SCHEMA_LINE) {
    throw new SchemaError(`${path} does not declare '${SCHEMA_LINE}'`);
  }
  const columns = lines[1].split(',');
  const rows = lines.slice(2).map((l) => l.split(','));
  for (const row of rows) {
    if (row.length !== columns.length) {
      throw new SchemaError(`${path}: row has ${row.length} fields, header has ${columns.length}`);
    }
  }
  return { columns, rows };
}

/** Column accessor that names the missing column on failure. */
export function column(table: Table, name: string, file: string): number {
  const idx = table.columns.indexOf(name);
  if (idx < 0) throw new MissingColumn(name, file);
  return idx;
}

export function numeric(value: string, file: string): number {
  const x = Number(value);
  if (!Number.isFinite(x)) throw new SchemaError(`${file}: '${value}' is not a number`);
  return x;
}
