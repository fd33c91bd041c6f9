import { describe, expect, it } from 'vitest';

import {
    aggregate,
    EpisodeMirror,
    EpisodeRecord,
    NoEpisodes,
    PlaySession,
    TRAINING_BUDGET_MS,
} from '../src/session';

function record(floors: number, reward = floors): EpisodeRecord {
    return {
        tower_seed: 1,
        dynamics_seed: 0,
        reward,
        floors,
        steps: floors * 40,
        outcome: 'timeout',
        themes: ['Ancient'],
    };
}

describe('phase gate', () => {
    it('holds training for the full five minute budget', () => {
        let clock = 0;
        const session = new PlaySession(() => clock);
        expect(TRAINING_BUDGET_MS).toBe(300_000);
        expect(session.phase).toBe('training');
        expect(session.canEnterTesting()).toBe(false);

        clock = TRAINING_BUDGET_MS - 1;
        expect(session.canEnterTesting()).toBe(false);
        expect(() => session.enterTesting()).toThrow(/budget/);
        expect(session.phase).toBe('training');

        clock = TRAINING_BUDGET_MS;
        expect(session.trainingRemainingMs()).toBe(0);
        expect(session.canEnterTesting()).toBe(true);
        session.enterTesting();
        expect(session.phase).toBe('testing');
    });

    it('allows an explicit early skip only', () => {
        let clock = 0;
        const session = new PlaySession(() => clock);
        session.enterTesting({ skip: true });
        expect(session.phase).toBe('testing');
    });

    it('drops training episodes and records testing episodes', () => {
        let clock = 0;
        const session = new PlaySession(() => clock);
        session.recordEpisode(record(2));
        expect(session.records).toHaveLength(0); // practice does not score
        session.enterTesting({ skip: true });
        session.recordEpisode(record(3));
        expect(session.records).toHaveLength(1);
    });
});

describe('report export', () => {
    it('raises NoEpisodes with nothing recorded', () => {
        const session = new PlaySession(() => 0);
        session.enterTesting({ skip: true });
        expect(() => session.exportReport()).toThrow(NoEpisodes);
    });

    it('reproduces the reference statistics for floors 3,4,3,5,4', () => {
        const stats = aggregate([3, 4, 3, 5, 4].map((f) => record(f)));
        expect(stats.episodes).toBe(5);
        expect(stats.mean_floors).toBeCloseTo(3.8, 10);
        expect(stats.std_reward).toBeCloseTo(0.748, 3);
        expect(stats.max_floors).toBe(5);
    });

    it('mirrors records verbatim and aggregates them', () => {
        const session = new PlaySession(() => 0);
        session.enterTesting({ skip: true });
        session.noteEpisodeSeed(7, 0);
        session.recordEpisode(record(2));
        session.recordEpisode(record(4));
        const report = session.exportReport();
        expect(report.agent).toBe('human');
        expect(report.protocol.mode).toBe('human-play');
        expect(report.protocol.test_seeds).toEqual([7]);
        expect(report.records).toHaveLength(2);
        expect(report.aggregates.max_floors).toBe(4);
        expect(report.aggregates.mean_reward).toBeCloseTo(3, 10);
        expect(report.theme_violations).toBe(0);
    });

    it('separates training seeds from testing seeds', () => {
        const session = new PlaySession(() => 0);
        session.noteEpisodeSeed(1, 0);
        session.enterTesting({ skip: true });
        session.noteEpisodeSeed(2, 0);
        session.recordEpisode(record(1));
        const report = session.exportReport();
        expect(report.protocol.train_seeds).toEqual([1]);
        expect(report.protocol.test_seeds).toEqual([2]);
    });
});

describe('episode mirroring', () => {
    it('copies server fields without recomputing them', () => {
        const mirror = new EpisodeMirror(9, 2);
        mirror.noteTheme('Ancient');
        mirror.noteStep({ reward: 0, outcome: null, counters: { floors: 0 } });
        mirror.noteStep({ reward: 1, outcome: null, counters: { floors: 1 } });
        mirror.noteTheme('Ancient'); // unchanged theme is not duplicated
        mirror.noteTheme('Moorish');
        mirror.noteStep({ reward: 0, outcome: 'timeout', counters: { floors: 1 } });
        const rec = mirror.toRecord();
        expect(rec).toEqual({
            tower_seed: 9,
            dynamics_seed: 2,
            reward: 1,
            floors: 1,
            steps: 3,
            outcome: 'timeout',
            themes: ['Ancient', 'Moorish'],
        });
    });
});
