// Play session state machine: a timed Training phase followed by scored
// Testing episodes, with a report export mirroring the evaluation report
// schema. Floor counts and outcomes are copied from server payloads; the
// client never computes game state.

export const TRAINING_BUDGET_MS = 5 * 60 * 1000;

export type Phase = 'training' | 'testing';

export interface EpisodeRecord {
    tower_seed: number;
    dynamics_seed: number;
    reward: number;
    floors: number;
    steps: number;
    outcome: string | null;
    themes: string[];
}

export interface ProtocolDescriptor {
    mode: string;
    train_seeds: number[];
    test_seeds: number[];
    dynamics_seeds: number[];
    train_themes: string[];
    test_themes: string[];
}

export class NoEpisodes extends Error {
    readonly code = 'NoEpisodes';
    constructor() {
        super('no completed test episodes to export');
    }
}

export interface SessionReport {
    protocol: ProtocolDescriptor;
    agent: string;
    records: EpisodeRecord[];
    aggregates: {
        episodes: number;
        mean_reward: number;
        std_reward: number;
        mean_floors: number;
        max_floors: number;
    };
    theme_violations: number;
}

export function aggregate(records: EpisodeRecord[]): SessionReport['aggregates'] {
    const n = records.length;
    if (n === 0) {
        return { episodes: 0, mean_reward: 0, std_reward: 0, mean_floors: 0, max_floors: 0 };
    }
    const rewards = records.map((r) => r.reward);
    const floors = records.map((r) => r.floors);
    const meanReward = rewards.reduce((a, b) => a + b, 0) / n;
    const variance = rewards.reduce((a, b) => a + (b - meanReward) ** 2, 0) / n;
    return {
        episodes: n,
        mean_reward: meanReward,
        std_reward: Math.sqrt(variance),
        mean_floors: floors.reduce((a, b) => a + b, 0) / n,
        max_floors: Math.max(...floors),
    };
}

export class PlaySession {
    phase: Phase = 'training';
    readonly records: EpisodeRecord[] = [];
    private readonly startedAt: number;
    private readonly budgetMs: number;
    private readonly now: () => number;
    private trainSeeds: number[] = [];
    private testSeeds: number[] = [];
    private dynamicsSeeds: number[] = [];

    constructor(now: () => number = Date.now, budgetMs: number = TRAINING_BUDGET_MS) {
        this.now = now;
        this.budgetMs = budgetMs;
        this.startedAt = now();
    }

    trainingRemainingMs(): number {
        return Math.max(0, this.budgetMs - (this.now() - this.startedAt));
    }

    // Testing unlocks when the wall-clock budget elapses or is skipped
    // explicitly; it never unlocks as a side effect of anything else.
    canEnterTesting(): boolean {
        return this.trainingRemainingMs() === 0;
    }

    enterTesting(opts: { skip?: boolean } = {}): void {
        if (this.phase === 'testing') return;
        if (!opts.skip && !this.canEnterTesting()) {
            throw new Error(
                `training budget has ${Math.ceil(this.trainingRemainingMs() / 1000)}s left`,
            );
        }
        this.phase = 'testing';
    }

    noteEpisodeSeed(towerSeed: number, dynamicsSeed: number): void {
        const pool = this.phase === 'training' ? this.trainSeeds : this.testSeeds;
        if (!pool.includes(towerSeed)) pool.push(towerSeed);
        if (!this.dynamicsSeeds.includes(dynamicsSeed)) this.dynamicsSeeds.push(dynamicsSeed);
    }

    // Called when a Testing episode finishes; every field is mirrored from
    // server payloads collected by the caller.
    recordEpisode(record: EpisodeRecord): void {
        if (this.phase !== 'testing') return; // training episodes are practice
        this.records.push(record);
    }

    exportReport(): SessionReport {
        if (this.records.length === 0) throw new NoEpisodes();
        const themes = new Set<string>();
        for (const r of this.records) r.themes.forEach((t) => themes.add(t));
        return {
            protocol: {
                mode: 'human-play',
                train_seeds: [...this.trainSeeds],
                test_seeds: [...this.testSeeds],
                dynamics_seeds: [...this.dynamicsSeeds],
                train_themes: [...themes].sort(),
                test_themes: [...themes].sort(),
            },
            agent: 'human',
            records: [...this.records],
            aggregates: aggregate(this.records),
            theme_violations: 0,
        };
    }
}

// Accumulates one episode's mirrored server fields until it ends.
export class EpisodeMirror {
    reward = 0;
    steps = 0;
    floors = 0;
    outcome: string | null = null;
    readonly themes: string[] = [];

    constructor(readonly towerSeed: number, readonly dynamicsSeed: number) {}

    noteTheme(theme: string): void {
        if (this.themes[this.themes.length - 1] !== theme) this.themes.push(theme);
    }

    noteStep(payload: { reward: number; outcome: string | null; counters: { floors: number } }): void {
        this.steps += 1;
        this.reward += payload.reward;
        this.floors = payload.counters.floors;
        this.outcome = payload.outcome;
    }

    toRecord(): EpisodeRecord {
        return {
            tower_seed: this.towerSeed,
            dynamics_seed: this.dynamicsSeed,
            reward: this.reward,
            floors: this.floors,
            steps: this.steps,
            outcome: this.outcome,
            themes: [...this.themes],
        };
    }
}
