#!/usr/bin/env node
import { writeFileSync } from 'fs';
import { blockPatternSvg } from './blocks';
import { convergenceSvg } from './convergence';
import { MissingColumn, SchemaError } from './csv';

function usage(): never {
  console.error('usage: plot <convergence|blocks> --in DIR --out FILE');
  process.exit(2);
}

export function main(argv: string[]): number {
  const [kind, ...rest] = argv;
  let inDir: string | undefined;
  let outFile: string | undefined;
  for (let i = 0; i < rest.length; i += 2) {
    const flag = rest[i];
    const value = rest[i + 1];
    if (value === undefined) usage();
    if (flag === '--in') inDir = value;
    else if (flag === '--out') outFile = value;
    else usage();
  }
  if (!inDir || !outFile || !kind) usage();
  try {
    let svg: string;
    if (kind === 'convergence') svg = convergenceSvg(inDir);
    else if (kind === 'blocks') svg = blockPatternSvg(inDir);
    else usage();
    writeFileSync(outFile, svg, 'utf-8');
    console.log(outFile);
    return 0;
  } catch (err) {
    if (err instanceof MissingColumn || err instanceof SchemaError) {
      console.error(`error: ${(err as Error).message}`);
      return 1;
    }
    throw err;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
