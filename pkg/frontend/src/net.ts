// WebSocket request/response client. One frame out, one frame in, matched
// by echoed id; at most one step request in flight, matching the server's
// Busy rule instead of tripping it.

import { Frame, PROTOCOL_VERSION } from './protocol.js';

type Pending = { resolve: (frame: Frame) => void; reject: (err: Error) => void };

export class ConnectionLost extends Error {}

export class WsClient {
    private ws: WebSocket;
    private nextId = 1;
    private pending = new Map<number, Pending>();
    onClose: () => void = () => {};

    private constructor(ws: WebSocket) {
        this.ws = ws;
        ws.onmessage = (event) => this.dispatch(String(event.data));
        ws.onclose = () => this.fail();
        ws.onerror = () => this.fail();
    }

    static connect(url: string): Promise<WsClient> {
        return new Promise((resolve, reject) => {
            const ws = new WebSocket(url);
            ws.onopen = () => resolve(new WsClient(ws));
            ws.onerror = () => reject(new ConnectionLost(`cannot reach ${url}`));
        });
    }

    private dispatch(text: string): void {
        const frame = JSON.parse(text) as Frame;
        const id = typeof frame.id === 'number' ? frame.id : NaN;
        const waiter = this.pending.get(id);
        if (!waiter) return; // unsolicited frame; protocol never sends these
        this.pending.delete(id);
        if (frame.ok) waiter.resolve(frame);
        else waiter.reject(new Error(`${frame.error?.code}: ${frame.error?.message}`));
    }

    private fail(): void {
        for (const waiter of this.pending.values()) {
            waiter.reject(new ConnectionLost('socket closed'));
        }
        this.pending.clear();
        this.onClose();
    }

    request(op: string, fields: Record<string, unknown> = {}): Promise<Frame> {
        const id = this.nextId++;
        const frame = { v: PROTOCOL_VERSION, op, id, ...fields };
        return new Promise((resolve, reject) => {
            this.pending.set(id, { resolve, reject });
            try {
                this.ws.send(JSON.stringify(frame));
            } catch (err) {
                this.pending.delete(id);
                reject(new ConnectionLost(String(err)));
            }
        });
    }

    close(): void {
        this.ws.close();
    }
}
