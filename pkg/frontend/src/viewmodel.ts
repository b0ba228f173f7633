// Console state machine. Pure data in, UI events out: the DOM layer in
// app.ts subscribes to the events, so everything here is unit-testable.

import {
  ackStatusText,
  AckStatus,
  Annotation,
  Priority,
  ProcessorEntry,
  WireMessage,
} from "./codec.js";

export interface TranscriptLine {
  frameSeq: number;
  processorId: string;
  priority: number;
  text: string;
}

export interface StatsSnapshot {
  framesReceived: bigint;
  framesProcessed: bigint;
  framesDropped: bigint;
  descriptionsSuppressed: bigint;
}

export class ConsoleSessionView {
  name = "";
  currentProcessor = "";
  subscribed = false;
  latestFrameSeq: number | null = null;
  latestAnnotations: Annotation[] = [];
  readonly transcript: TranscriptLine[] = [];
  latestStats: StatsSnapshot | null = null;

  constructor(public readonly sessionId: number) {}
}

export type UiEvent =
  | { kind: "connected"; sessionId: number }
  | { kind: "processors"; entries: ProcessorEntry[] }
  | { kind: "sessions"; views: ConsoleSessionView[] }
  | { kind: "subscribed"; sessionId: number }
  | {
      kind: "ack";
      targetSession: number;
      processorId: string;
      status: number;
      statusText: string;
      ok: boolean;
    }
  | { kind: "result"; view: ConsoleSessionView; line: TranscriptLine | null }
  | { kind: "stats"; view: ConsoleSessionView }
  | { kind: "server-error"; code: number; message: string };

export class ConsoleModel {
  consoleSessionId: number | null = null;
  processors: ProcessorEntry[] = [];
  readonly sessions = new Map<number, ConsoleSessionView>();

  private session(id: number): ConsoleSessionView {
    let view = this.sessions.get(id);
    if (!view) {
      view = new ConsoleSessionView(id);
      this.sessions.set(id, view);
    }
    return view;
  }

  /** The session whose mirrored results are currently rendered. */
  subscribedView(): ConsoleSessionView | null {
    for (const view of this.sessions.values()) {
      if (view.subscribed) return view;
    }
    return null;
  }

  handle(msg: WireMessage): UiEvent[] {
    switch (msg.type) {
      case "HelloAck":
        this.consoleSessionId = msg.session_id;
        return [{ kind: "connected", sessionId: msg.session_id }];

      case "ProcessorList":
        this.processors = msg.entries;
        return [{ kind: "processors", entries: msg.entries }];

      case "SessionList": {
        const seen = new Set<number>();
        for (const e of msg.entries) {
          const view = this.session(e.session_id);
          view.name = e.name;
          view.currentProcessor = e.current_processor;
          seen.add(e.session_id);
        }
        for (const id of [...this.sessions.keys()]) {
          if (!seen.has(id)) this.sessions.delete(id);
        }
        return [{ kind: "sessions", views: [...this.sessions.values()] }];
      }

      case "SubscribeAck": {
        const events: UiEvent[] = [];
        if (msg.status === AckStatus.OK) {
          for (const view of this.sessions.values()) view.subscribed = false;
          this.session(msg.target_session).subscribed = true;
          events.push({ kind: "subscribed", sessionId: msg.target_session });
        }
        events.push({
          kind: "ack",
          targetSession: msg.target_session,
          processorId: "",
          status: msg.status,
          statusText: ackStatusText(msg.status),
          ok: msg.status === AckStatus.OK,
        });
        return events;
      }

      case "SetProcessorAck": {
        // The processor label only moves on a confirmed switch.
        if (msg.status === AckStatus.OK && this.sessions.has(msg.target_session)) {
          this.session(msg.target_session).currentProcessor = msg.id;
        }
        return [
          {
            kind: "ack",
            targetSession: msg.target_session,
            processorId: msg.id,
            status: msg.status,
            statusText: ackStatusText(msg.status),
            ok: msg.status === AckStatus.OK,
          },
        ];
      }

      case "ResultMsg": {
        const view = this.subscribedView();
        if (!view) return [];
        view.latestFrameSeq = msg.frame_seq;
        view.latestAnnotations = msg.annotations;
        view.currentProcessor = msg.processor_id;
        let line: TranscriptLine | null = null;
        if (msg.description) {
          line = {
            frameSeq: msg.frame_seq,
            processorId: msg.processor_id,
            priority: msg.description.priority,
            text: msg.description.text,
          };
          view.transcript.push(line);
        }
        return [{ kind: "result", view, line }];
      }

      case "StatsMsg": {
        const view = this.session(msg.session_id);
        view.latestStats = {
          framesReceived: msg.frames_received,
          framesProcessed: msg.frames_processed,
          framesDropped: msg.frames_dropped,
          descriptionsSuppressed: msg.descriptions_suppressed,
        };
        return [{ kind: "stats", view }];
      }

      case "ErrorMsg":
        return [{ kind: "server-error", code: msg.code, message: msg.message }];

      default:
        return [];
    }
  }
}

export function formatTranscriptLine(line: TranscriptLine): string {
  const p = line.priority === Priority.INTERRUPT ? "interrupt" : "routine";
  return `[seq=${line.frameSeq}][proc=${line.processorId}][p=${p}] ${line.text}`;
}

/**
 * Capacity-one buffer for render scheduling. Bursts of mirrored results
 * collapse to the newest one; the drawing pass takes at most one item per
 * animation tick, so memory stays bounded at any input rate.
 */
export class LatestWins<T> {
  private pending: T | null = null;
  replacedCount = 0;

  submit(value: T): void {
    if (this.pending !== null) this.replacedCount++;
    this.pending = value;
  }

  take(): T | null {
    const value = this.pending;
    this.pending = null;
    return value;
  }

  hasPending(): boolean {
    return this.pending !== null;
  }
}
