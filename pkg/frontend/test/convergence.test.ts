import { createHash } from 'crypto';
import { mkdtempSync, writeFileSync, existsSync } from 'fs';
import { tmpdir } from 'os';
import { join } from 'path';
import { describe, expect, it } from 'vitest';
import { convergenceSvg } from '../src/convergence';
import { MissingColumn, SchemaError } from '../src/csv';
import { main } from '../src/cli';

const FIXTURE = [
  '# schema=1',
  'method,L,tol,rmse,work_mean',
  'mlmc,3,0.16,0.147,777655.0',
  'mc,1,0.16,0.2493,511582.5',
  'mlmc,3,0.08,0.0788,921370.0',
  'mc,1,0.08,0.0503,2041162.5',
  '',
].join('\n');

function fixtureDir(content: string = FIXTURE): string {
  const dir = mkdtempSync(join(tmpdir(), 'mbmlmc-plots-'));
  writeFileSync(join(dir, 'convergence.csv'), content);
  return dir;
}

describe('convergence plot', () => {
  it('renders one series per (method, L) with one point per tolerance', () => {
    const svg = convergenceSvg(fixtureDir());
    expect((svg.match(/<polyline /g) ?? []).length).toBe(2);
    expect((svg.match(/<circle /g) ?? []).length).toBe(4);
    expect(svg).toContain('mlmc L=3');
    expect(svg).toContain('mc L=1');
  });

  it('is byte-stable and matches the pinned checksum', () => {
    const dir = fixtureDir();
    const a = convergenceSvg(dir);
    const b = convergenceSvg(dir);
    expect(a).toBe(b);
    const digest = createHash('sha256').update(a).digest('hex');
    expect(digest).toBe(
      'c736abeb97e2dc85ccf65be25db2fb7124e1eacec1fac19b54b497c9c7247e61',
    );
  });

  it('rejects empty data without writing a file', () => {
    const dir = fixtureDir('# schema=1\nmethod,L,tol,rmse,work_mean\n');
    const out = join(dir, 'out.svg');
    expect(() => convergenceSvg(dir)).toThrow(SchemaError);
    const rc = main(['convergence', '--in', dir, '--out', out]);
    expect(rc).toBe(1);
    expect(existsSync(out)).toBe(false);
  });

  it('rejects a file without the schema comment', () => {
    const dir = fixtureDir('method,L,tol,rmse,work_mean\nmlmc,2,0.1,0.1,10\n');
    expect(() => convergenceSvg(dir)).toThrow(SchemaError);
  });

  it('names the missing column', () => {
    const dir = fixtureDir('# schema=1\nmethod,L,tol,rmse\nmlmc,2,0.1,0.1\n');
    try {
      convergenceSvg(dir);
      throw new Error('should have thrown');
    } catch (err) {
      expect(err).toBeInstanceOf(MissingColumn);
      expect((err as MissingColumn).column).toBe('work_mean');
    }
  });

  it('cli writes the svg and reports the path', () => {
    const dir = fixtureDir();
    const out = join(dir, 'conv.svg');
    const rc = main(['convergence', '--in', dir, '--out', out]);
    expect(rc).toBe(0);
    expect(existsSync(out)).toBe(true);
  });
});
