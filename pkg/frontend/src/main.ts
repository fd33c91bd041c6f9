// Entry point: wires the socket, keyboard, render loop, phase gate, and
// report export together. Decision cadence is 30 steps/sec; the pressed-key
// set is sampled into one chord per decision, and at most one step request
// is in flight at a time.

import { chordToAction, flattenAction, InfoPayload, StepPayload, DEFAULT_PORT } from './protocol.js';
import { reversePalette } from './palette.js';
import { drawRaster, hudText } from './render.js';
import { WsClient } from './net.js';
import { EpisodeMirror, NoEpisodes, PlaySession } from './session.js';

const DECISION_MS = 1000 / 30;

interface Ui {
    canvas: HTMLCanvasElement;
    hud: HTMLElement;
    banner: HTMLElement;
    seed: HTMLInputElement;
    newEpisode: HTMLButtonElement;
    startTesting: HTMLButtonElement;
    exportReport: HTMLButtonElement;
}

function ui(): Ui {
    const get = (id: string) => {
        const el = document.getElementById(id);
        if (!el) throw new Error(`missing #${id}`);
        return el;
    };
    return {
        canvas: get('view') as HTMLCanvasElement,
        hud: get('hud'),
        banner: get('banner'),
        seed: get('seed') as HTMLInputElement,
        newEpisode: get('new-episode') as HTMLButtonElement,
        startTesting: get('start-testing') as HTMLButtonElement,
        exportReport: get('export-report') as HTMLButtonElement,
    };
}

class App {
    private client: WsClient;
    private readonly session = new PlaySession();
    private readonly els = ui();
    private readonly pressed = new Set<string>();
    private sessionId = '';
    private payload: StepPayload | null = null;
    private info: InfoPayload | null = null;
    private reverse = new Map<number, number>();
    private mirror: EpisodeMirror | null = null;
    private inFlight = false;
    private connection: 'connected' | 'lost' = 'connected';
    private lastFloor = -1;

    constructor(client: WsClient) {
        this.client = client;
        client.onClose = () => {
            // No phantom inputs after a drop: the key set is cleared and the
            // step loop stops until reconnect.
            this.connection = 'lost';
            this.pressed.clear();
            this.banner('connection lost; restart the server and reload');
        };
        window.addEventListener('keydown', (e) => {
            if (e.code === 'Space') e.preventDefault();
            this.pressed.add(e.code);
        });
        window.addEventListener('keyup', (e) => this.pressed.delete(e.code));
        this.els.newEpisode.onclick = () => void this.startEpisode();
        this.els.startTesting.onclick = () => this.tryStartTesting();
        this.els.exportReport.onclick = () => this.exportReport();
    }

    private banner(text: string): void {
        this.els.banner.textContent = text;
    }

    async startEpisode(): Promise<void> {
        if (this.connection === 'lost') return;
        const towerSeed = Number(this.els.seed.value) | 0;
        if (this.sessionId) {
            await this.client.request('close', { session_id: this.sessionId }).catch(() => {});
        }
        const created = await this.client.request('create', {
            config: { tower_seed: towerSeed },
        });
        this.sessionId = created.session_id as string;
        this.payload = created.step as StepPayload;
        this.mirror = new EpisodeMirror(towerSeed, 0);
        this.session.noteEpisodeSeed(towerSeed, 0);
        this.lastFloor = -1;
        await this.refreshInfo();
    }

    private async refreshInfo(): Promise<void> {
        const info = (await this.client.request('info', {
            session_id: this.sessionId,
        })) as unknown as InfoPayload;
        this.info = info;
        this.reverse = reversePalette(info.palette);
        this.mirror?.noteTheme(info.theme);
    }

    private tryStartTesting(): void {
        try {
            this.session.enterTesting({ skip: this.session.canEnterTesting() ? undefined : true });
            this.banner('testing phase: completed episodes are recorded');
        } catch (err) {
            this.banner(String(err));
        }
    }

    private exportReport(): void {
        try {
            const report = this.session.exportReport();
            const blob = new Blob([JSON.stringify(report, null, 2)], { type: 'application/json' });
            const a = document.createElement('a');
            a.href = URL.createObjectURL(blob);
            a.download = 'session-report.json';
            a.click();
            URL.revokeObjectURL(a.href);
        } catch (err) {
            if (err instanceof NoEpisodes) this.banner('no completed test episodes yet');
            else this.banner(String(err));
        }
    }

    // One decision per tick: sample the chord, send the step, mirror the
    // reply. Skipped while a request is in flight or the episode is over.
    async tick(): Promise<void> {
        if (!this.sessionId || !this.payload || this.inFlight) return;
        if (this.connection === 'lost' || this.payload.done) return;
        this.inFlight = true;
        try {
            const action = flattenAction(chordToAction(this.pressed));
            const reply = await this.client.request('step', {
                session_id: this.sessionId,
                action,
            });
            this.payload = reply.step as StepPayload;
            this.mirror?.noteStep(this.payload);
            if (this.payload.floor !== this.lastFloor && !this.payload.done) {
                this.lastFloor = this.payload.floor;
                await this.refreshInfo(); // palette changes per floor
            }
            if (this.payload.done && this.mirror) {
                this.session.recordEpisode(this.mirror.toRecord());
                this.mirror = null;
            }
        } catch (err) {
            this.banner(String(err));
        } finally {
            this.inFlight = false;
        }
    }

    render(): void {
        if (!this.payload || !this.info) return;
        const ctx = this.els.canvas.getContext('2d');
        if (!ctx) return;
        drawRaster(ctx, this.payload, this.reverse);
        this.els.hud.textContent = hudText({
            payload: this.payload,
            theme: this.info.theme,
            phase: this.session.phase,
            trainingRemainingMs: this.session.trainingRemainingMs(),
            totalReward: this.mirror?.reward ?? 0,
            connection: this.connection,
        });
        if (this.session.phase === 'training' && this.session.canEnterTesting()) {
            this.banner('training budget elapsed; you can start the testing phase');
        }
    }

    run(): void {
        setInterval(() => void this.tick(), DECISION_MS);
        const loop = () => {
            this.render();
            requestAnimationFrame(loop);
        };
        requestAnimationFrame(loop);
    }
}

async function boot(): Promise<void> {
    const host = window.location.hostname || '127.0.0.1';
    const url = `ws://${host}:${DEFAULT_PORT}/v1/ws`;
    try {
        const client = await WsClient.connect(url);
        const app = new App(client);
        await app.startEpisode();
        app.run();
    } catch (err) {
        const banner = document.getElementById('banner');
        if (banner) banner.textContent = `cannot reach ${url}; run: towerforge serve`;
    }
}

void boot();
