// Canvas drawing: the palette raster, scaled to the canvas, plus the HUD
// line. Rendering is tile-palette based on purpose; the human sees the
// same egocentric observation the agent sees.

import { decodeRaster, StepPayload } from './protocol.js';
import { codeToColor, isAgentCode } from './palette.js';

export function drawRaster(
    ctx: CanvasRenderingContext2D,
    payload: StepPayload,
    reverse: Map<number, number>,
): void {
    const [h, w] = payload.obs_shape;
    const bytes = decodeRaster(payload.obs_b64, payload.obs_shape);
    const cell = Math.floor(Math.min(ctx.canvas.width / w, ctx.canvas.height / h));
    ctx.fillStyle = '#000';
    ctx.fillRect(0, 0, ctx.canvas.width, ctx.canvas.height);
    for (let r = 0; r < h; r++) {
        for (let c = 0; c < w; c++) {
            const code = bytes[r * w + c];
            ctx.fillStyle = codeToColor(code);
            ctx.fillRect(c * cell, r * cell, cell, cell);
            if (isAgentCode(code, reverse)) {
                ctx.strokeStyle = '#fff';
                ctx.strokeRect(c * cell + 0.5, r * cell + 0.5, cell - 1, cell - 1);
            }
        }
    }
}

export interface HudState {
    payload: StepPayload;
    theme: string;
    phase: string;
    trainingRemainingMs: number;
    totalReward: number;
    connection: 'connected' | 'lost';
}

export function hudText(state: HudState): string {
    const p = state.payload;
    const parts = [
        `floor ${p.floor}`,
        `keys ${p.keys}`,
        `time ${p.time}`,
        `reward ${state.totalReward.toFixed(1)}`,
        state.theme,
    ];
    if (state.phase === 'training') {
        parts.push(`training ${Math.ceil(state.trainingRemainingMs / 1000)}s`);
    } else {
        parts.push('testing');
    }
    if (state.connection === 'lost') parts.push('CONNECTION LOST');
    if (p.done) parts.push(`episode over: ${p.outcome}`);
    return parts.join('  |  ');
}
