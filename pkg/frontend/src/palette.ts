// Palette-code coloring. A raster byte is ((entry + shift) % 16) * 13 + bucket
// with four brightness buckets; the hue comes from the shifted entry, so the
// same tile kind genuinely looks different across themes, exactly like the
// observation the agent sees.

export const BUCKETS = 4;
export const CODE_BASE = 13;

// One hue per shifted palette slot, spread around the wheel.
const HUES = [210, 30, 120, 275, 0, 55, 160, 330, 95, 240, 20, 185, 300, 140, 70, 255];

export function codeToColor(code: number): string {
    const slot = Math.floor(code / CODE_BASE) % 16;
    const bucket = code % CODE_BASE;
    const light = 22 + bucket * 14; // 22..64%
    return `hsl(${HUES[slot]}, 62%, ${light}%)`;
}

// info.palette maps tile entry -> code for the current floor; inverting it
// recovers tile kinds from raster bytes. Codes are distinct by contract.
export function reversePalette(palette: number[]): Map<number, number> {
    const out = new Map<number, number>();
    palette.forEach((code, entry) => out.set(code, entry));
    return out;
}

export const AGENT_ENTRY = 14;

export function isAgentCode(code: number, reverse: Map<number, number>): boolean {
    return reverse.get(code) === AGENT_ENTRY;
}
