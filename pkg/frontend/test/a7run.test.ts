import { createHash } from 'crypto';
import { existsSync, mkdtempSync, readFileSync } from 'fs';
import { tmpdir } from 'os';
import { join } from 'path';
import { describe, expect, it } from 'vitest';
import { main } from '../src/cli';

// committed snapshot of a real `mbmlmc run` output directory (desk heat preset)
const RUN_DIR = join(__dirname, 'fixtures', 'a7run');

describe('plots from a real experiment directory', () => {
  it('produces the convergence figure', () => {
    const out = join(mkdtempSync(join(tmpdir(), 'a7-')), 'conv.svg');
    expect(main(['convergence', '--in', RUN_DIR, '--out', out])).toBe(0);
    const svg = readFileSync(out, 'utf-8');
    expect(svg).toContain('<svg');
    expect(svg).toContain('mlmc L=3');
    expect(svg).toContain('mc L=1');
  });

  it('produces the block-pattern figure with the partition size', () => {
    const out = join(mkdtempSync(join(tmpdir(), 'a7-')), 'blocks.svg');
    expect(main(['blocks', '--in', RUN_DIR, '--out', out])).toBe(0);
    const svg = readFileSync(out, 'utf-8');
    expect(svg).toContain('of 40 blocks resolved');
  });

  it('renders byte-identically across invocations', () => {
    const dir = mkdtempSync(join(tmpdir(), 'a7-'));
    const a = join(dir, 'a.svg');
    const b = join(dir, 'b.svg');
    main(['convergence', '--in', RUN_DIR, '--out', a]);
    main(['convergence', '--in', RUN_DIR, '--out', b]);
    const da = createHash('sha256').update(readFileSync(a)).digest('hex');
    const db = createHash('sha256').update(readFileSync(b)).digest('hex');
    expect(da).toBe(db);
  });

  it('refuses a directory without the CSVs', () => {
    const dir = mkdtempSync(join(tmpdir(), 'a7-empty-'));
    const out = join(dir, 'x.svg');
    expect(main(['convergence', '--in', dir, '--out', out])).toBe(1);
    expect(existsSync(out)).toBe(false);
  });
});
