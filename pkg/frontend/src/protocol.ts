// Wire protocol types and pure helpers shared by the client modules.
// Everything here mirrors docs/protocol.md; the client never invents
// game state, it only decodes what the service sends.

export const PROTOCOL_VERSION = 1;
export const ACTION_COUNT = 54;
export const DEFAULT_PORT = 8808;

export interface StepPayload {
    reward: number;
    done: boolean;
    floor: number;
    keys: number;
    time: number;
    outcome: string | null;
    counters: { floors: number; keys: number; doors: number; puzzles: number; orbs: number };
    obs_shape: [number, number];
    obs_b64: string;
}

export interface InfoPayload {
    session_id: string;
    config: Record<string, unknown>;
    done: boolean;
    outcome: string | null;
    theme: string;
    palette: number[];
    steps: number;
    total_reward: number;
}

export interface ErrorBody {
    code: string;
    message: string;
}

export interface Frame {
    v: number;
    ok: boolean;
    id?: number | string;
    op?: string;
    error?: ErrorBody;
    [key: string]: unknown;
}

// Sub-action values: 0 is always "none"; mixed radix (3, 3, 3, 2).
export interface ActionTuple {
    moveFb: 0 | 1 | 2;
    moveLr: 0 | 1 | 2;
    camera: 0 | 1 | 2;
    jump: 0 | 1;
}

export const NOOP: ActionTuple = { moveFb: 0, moveLr: 0, camera: 0, jump: 0 };

export function flattenAction(a: ActionTuple): number {
    return ((a.moveFb * 3 + a.moveLr) * 3 + a.camera) * 2 + a.jump;
}

// Key bindings; code -> which sub-axis and value it asserts.
export const CONTROL_KEYS: { [code: string]: Partial<ActionTuple> } = {
    'KeyW': { moveFb: 1 },
    'ArrowUp': { moveFb: 1 },
    'KeyS': { moveFb: 2 },
    'ArrowDown': { moveFb: 2 },
    'KeyA': { moveLr: 1 },
    'KeyD': { moveLr: 2 },
    'KeyQ': { camera: 1 },
    'ArrowLeft': { camera: 1 },
    'KeyE': { camera: 2 },
    'ArrowRight': { camera: 2 },
    'Space': { jump: 1 },
    'KeyX': { jump: 1 },
};

// Documented precedence when opposing keys are held in one chord:
// forward beats back, strafe left beats right, camera left beats right.
// Lower asserted value wins on each axis; "none" never overrides.
export function chordToAction(pressed: Iterable<string>): ActionTuple {
    const out: ActionTuple = { ...NOOP };
    for (const code of pressed) {
        const part = CONTROL_KEYS[code];
        if (!part) continue;
        for (const axis of ['moveFb', 'moveLr', 'camera', 'jump'] as const) {
            const value = part[axis];
            if (value === undefined) continue;
            if (out[axis] === 0 || value < out[axis]) {
                (out as any)[axis] = value;
            }
        }
    }
    return out;
}

const B64_ALPHABET = 'ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/';
const B64_LOOKUP = new Map<string, number>(
    Array.from(B64_ALPHABET, (ch, i) => [ch, i] as [string, number]),
);

// Raster bytes arrive base64-encoded, row-major. Decoded by hand so the
// module runs identically in browsers and in the test runner.
export function decodeRaster(b64: string, shape: [number, number]): Uint8Array {
    const [h, w] = shape;
    const out = new Uint8Array(h * w);
    let bits = 0;
    let acc = 0;
    let at = 0;
    for (const ch of b64) {
        if (ch === '=') break;
        const value = B64_LOOKUP.get(ch);
        if (value === undefined) throw new Error(`bad base64 character ${JSON.stringify(ch)}`);
        acc = (acc << 6) | value;
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            if (at >= out.length) throw new Error('raster longer than its declared shape');
            out[at++] = (acc >> bits) & 0xff;
        }
    }
    if (at !== out.length) throw new Error(`raster has ${at} bytes, expected ${out.length}`);
    return out;
}
