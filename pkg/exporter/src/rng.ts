/**
 * Seeded randomness for model synthesis.
 *
 * splitmix64 drives the uniform stream (64-bit state walked by the golden
 * gamma, output mixed twice); doubles take the top 53 bits. Standard
 * normals come from Box-Muller pairs. Everything is pure integer/double
 * arithmetic on one BigInt state, so the same seed always reproduces the
 * same model bytes on a given runtime.
 */

const MASK64 = (1n << 64n) - 1n;
const GAMMA = 0x9e3779b97f4a7c15n;

export class SplitMix64 {
  private state: bigint;

  constructor(seed: number | bigint) {
    this.state = BigInt(seed) & MASK64;
  }

  nextU64(): bigint {
    this.state = (this.state + GAMMA) & MASK64;
    let z = this.state;
    z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & MASK64;
    z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & MASK64;
    return z ^ (z >> 31n);
  }

  /** Uniform double in [0, 1) from the top 53 bits. */
  nextUniform(): number {
    return Number(this.nextU64() >> 11n) / 9007199254740992;
  }

  /** Standard normals via Box-Muller on consecutive uniform pairs. */
  normals(count: number): Float64Array {
    const out = new Float64Array(count);
    for (let i = 0; i < count; i += 2) {
      const u1 = this.nextUniform();
      const u2 = this.nextUniform();
      const r = Math.sqrt(-2.0 * Math.log(1.0 - u1));
      const theta = 2.0 * Math.PI * u2;
      out[i] = r * Math.cos(theta);
      if (i + 1 < count) {
        out[i + 1] = r * Math.sin(theta);
      }
    }
    return out;
  }
}
