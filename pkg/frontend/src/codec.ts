// Binary wire codec for the relay protocol, browser side.
// One message body per WebSocket binary frame; all integers little-endian;
// strings are u16 byte-length + UTF-8. Encoding is canonical.

export const MessageType = {
  HELLO: 0x01,
  HELLO_ACK: 0x02,
  LIST_PROCESSORS: 0x03,
  PROCESSOR_LIST: 0x04,
  SET_PROCESSOR: 0x05,
  SET_PROCESSOR_ACK: 0x06,
  FRAME: 0x07,
  RESULT: 0x08,
  ERROR: 0x09,
  PING: 0x0a,
  PONG: 0x0b,
  STATS_REQUEST: 0x0c,
  STATS: 0x0d,
  SESSION_LIST_REQUEST: 0x0e,
  SESSION_LIST: 0x0f,
  SUBSCRIBE: 0x10,
  SUBSCRIBE_ACK: 0x11,
} as const;

export const AckStatus = {
  OK: 0,
  UNKNOWN_ID: 1,
  BAD_OPTIONS: 2,
  NO_SUCH_SESSION: 3,
  NOT_PERMITTED: 4,
} as const;

export const Priority = { ROUTINE: 0, INTERRUPT: 1 } as const;
export const Role = { SOURCE: 0, CONSOLE: 1 } as const;

export const AnnotationKind = { BOX: 0, POINT: 1, POLYLINE: 2, LABEL: 3 } as const;

export interface Annotation {
  kind: number;
  label: string;
  confidence: number; // [0,1], 1/10000 grid
  coords: [number, number][]; // normalized, 1/65535 grid
}

export interface ProcessorEntry {
  id: string;
  display_name: string;
  flags: number;
}

export interface SessionEntry {
  session_id: number;
  name: string;
  current_processor: string;
}

export interface ResultDescription {
  priority: number;
  text: string;
}

export type WireMessage =
  | { type: "Hello"; version: number; role: number; name: string }
  | { type: "HelloAck"; session_id: number; server_version: number }
  | { type: "ListProcessors" }
  | { type: "ProcessorList"; entries: ProcessorEntry[] }
  | { type: "SetProcessor"; target_session: number; id: string; options: string }
  | { type: "SetProcessorAck"; target_session: number; id: string; status: number }
  | {
      type: "FrameMsg";
      seq: number;
      capture_ts_us: bigint;
      width: number;
      height: number;
      format: number;
      payload: Uint8Array;
    }
  | {
      type: "ResultMsg";
      frame_seq: number;
      processor_id: string;
      recv_to_dispatch_us: number;
      process_us: number;
      annotations: Annotation[];
      description: ResultDescription | null;
    }
  | { type: "ErrorMsg"; code: number; message: string }
  | { type: "Ping"; token: Uint8Array }
  | { type: "Pong"; token: Uint8Array }
  | { type: "StatsRequest"; target_session: number }
  | {
      type: "StatsMsg";
      session_id: number;
      frames_received: bigint;
      frames_processed: bigint;
      frames_dropped: bigint;
      descriptions_suppressed: bigint;
    }
  | { type: "SessionListRequest" }
  | { type: "SessionList"; entries: SessionEntry[] }
  | { type: "Subscribe"; target_session: number }
  | { type: "SubscribeAck"; target_session: number; status: number };

export class CodecError extends Error {}

const encoder = new TextEncoder();
const decoder = new TextDecoder("utf-8", { fatal: true });

class Writer {
  private chunks: number[] = [];

  u8(v: number) {
    this.chunks.push(v & 0xff);
  }

  u16(v: number) {
    this.chunks.push(v & 0xff, (v >>> 8) & 0xff);
  }

  u32(v: number) {
    this.chunks.push(v & 0xff, (v >>> 8) & 0xff, (v >>> 16) & 0xff, (v >>> 24) & 0xff);
  }

  u64(v: bigint) {
    let x = BigInt.asUintN(64, v);
    for (let i = 0; i < 8; i++) {
      this.chunks.push(Number(x & 0xffn));
      x >>= 8n;
    }
  }

  bytes(b: Uint8Array) {
    for (const byte of b) this.chunks.push(byte);
  }

  str(s: string) {
    const raw = encoder.encode(s);
    if (raw.length > 0xffff) throw new CodecError("string too long");
    this.u16(raw.length);
    this.bytes(raw);
  }

  finish(): Uint8Array {
    return Uint8Array.from(this.chunks);
  }
}

class Reader {
  private view: DataView;
  private pos = 0;

  constructor(private buf: Uint8Array) {
    this.view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  }

  private need(n: number) {
    if (this.pos + n > this.buf.length) throw new CodecError("field overruns body");
  }

  u8(): number {
    this.need(1);
    return this.view.getUint8(this.pos++);
  }

  u16(): number {
    this.need(2);
    const v = this.view.getUint16(this.pos, true);
    this.pos += 2;
    return v;
  }

  u32(): number {
    this.need(4);
    const v = this.view.getUint32(this.pos, true);
    this.pos += 4;
    return v;
  }

  u64(): bigint {
    this.need(8);
    const v = this.view.getBigUint64(this.pos, true);
    this.pos += 8;
    return v;
  }

  bytes(n: number): Uint8Array {
    this.need(n);
    const v = this.buf.slice(this.pos, this.pos + n);
    this.pos += n;
    return v;
  }

  str(): string {
    const n = this.u16();
    try {
      return decoder.decode(this.bytes(n));
    } catch {
      throw new CodecError("invalid UTF-8 in string");
    }
  }

  done() {
    if (this.pos !== this.buf.length) throw new CodecError("trailing bytes in body");
  }
}

export function encodeMessage(m: WireMessage): Uint8Array {
  const w = new Writer();
  switch (m.type) {
    case "Hello":
      w.u8(MessageType.HELLO);
      w.u8(m.version);
      w.u8(m.role);
      w.str(m.name);
      break;
    case "HelloAck":
      w.u8(MessageType.HELLO_ACK);
      w.u32(m.session_id);
      w.u8(m.server_version);
      break;
    case "ListProcessors":
      w.u8(MessageType.LIST_PROCESSORS);
      break;
    case "ProcessorList":
      w.u8(MessageType.PROCESSOR_LIST);
      w.u16(m.entries.length);
      for (const e of m.entries) {
        w.str(e.id);
        w.str(e.display_name);
        w.u8(e.flags);
      }
      break;
    case "SetProcessor":
      w.u8(MessageType.SET_PROCESSOR);
      w.u32(m.target_session);
      w.str(m.id);
      w.str(m.options);
      break;
    case "SetProcessorAck":
      w.u8(MessageType.SET_PROCESSOR_ACK);
      w.u32(m.target_session);
      w.str(m.id);
      w.u8(m.status);
      break;
    case "FrameMsg":
      w.u8(MessageType.FRAME);
      w.u32(m.seq);
      w.u64(m.capture_ts_us);
      w.u16(m.width);
      w.u16(m.height);
      w.u8(m.format);
      w.u8(0);
      w.u32(m.payload.length);
      w.bytes(m.payload);
      break;
    case "ResultMsg":
      w.u8(MessageType.RESULT);
      w.u32(m.frame_seq);
      w.str(m.processor_id);
      w.u32(m.recv_to_dispatch_us);
      w.u32(m.process_us);
      w.u16(m.annotations.length);
      for (const a of m.annotations) {
        w.u8(a.kind);
        w.str(a.label);
        w.u16(Math.round(a.confidence * 10000));
        w.u16(a.coords.length);
        for (const [x, y] of a.coords) {
          w.u16(Math.round(x * 65535));
          w.u16(Math.round(y * 65535));
        }
      }
      if (m.description === null) {
        w.u8(0);
      } else {
        w.u8(1);
        w.u8(m.description.priority);
        w.str(m.description.text);
      }
      break;
    case "ErrorMsg":
      w.u8(MessageType.ERROR);
      w.u8(m.code);
      w.str(m.message);
      break;
    case "Ping":
    case "Pong":
      if (m.token.length !== 8) throw new CodecError("token must be 8 bytes");
      w.u8(m.type === "Ping" ? MessageType.PING : MessageType.PONG);
      w.bytes(m.token);
      break;
    case "StatsRequest":
      w.u8(MessageType.STATS_REQUEST);
      w.u32(m.target_session);
      break;
    case "StatsMsg":
      w.u8(MessageType.STATS);
      w.u32(m.session_id);
      w.u64(m.frames_received);
      w.u64(m.frames_processed);
      w.u64(m.frames_dropped);
      w.u64(m.descriptions_suppressed);
      break;
    case "SessionListRequest":
      w.u8(MessageType.SESSION_LIST_REQUEST);
      break;
    case "SessionList":
      w.u8(MessageType.SESSION_LIST);
      w.u16(m.entries.length);
      for (const e of m.entries) {
        w.u32(e.session_id);
        w.str(e.name);
        w.str(e.current_processor);
      }
      break;
    case "Subscribe":
      w.u8(MessageType.SUBSCRIBE);
      w.u32(m.target_session);
      break;
    case "SubscribeAck":
      w.u8(MessageType.SUBSCRIBE_ACK);
      w.u32(m.target_session);
      w.u8(m.status);
      break;
  }
  return w.finish();
}

export function decodeMessage(body: Uint8Array): WireMessage {
  if (body.length === 0) throw new CodecError("empty body");
  const r = new Reader(body);
  const typeCode = r.u8();
  let msg: WireMessage;
  switch (typeCode) {
    case MessageType.HELLO:
      msg = { type: "Hello", version: r.u8(), role: r.u8(), name: r.str() };
      break;
    case MessageType.HELLO_ACK:
      msg = { type: "HelloAck", session_id: r.u32(), server_version: r.u8() };
      break;
    case MessageType.LIST_PROCESSORS:
      msg = { type: "ListProcessors" };
      break;
    case MessageType.PROCESSOR_LIST: {
      const count = r.u16();
      const entries: ProcessorEntry[] = [];
      for (let i = 0; i < count; i++) {
        entries.push({ id: r.str(), display_name: r.str(), flags: r.u8() });
      }
      msg = { type: "ProcessorList", entries };
      break;
    }
    case MessageType.SET_PROCESSOR:
      msg = { type: "SetProcessor", target_session: r.u32(), id: r.str(), options: r.str() };
      break;
    case MessageType.SET_PROCESSOR_ACK:
      msg = { type: "SetProcessorAck", target_session: r.u32(), id: r.str(), status: r.u8() };
      break;
    case MessageType.FRAME: {
      const seq = r.u32();
      const capture_ts_us = r.u64();
      const width = r.u16();
      const height = r.u16();
      const format = r.u8();
      if (r.u8() !== 0) throw new CodecError("reserved byte must be 0");
      const payload = r.bytes(r.u32());
      msg = { type: "FrameMsg", seq, capture_ts_us, width, height, format, payload };
      break;
    }
    case MessageType.RESULT: {
      const frame_seq = r.u32();
      const processor_id = r.str();
      const recv_to_dispatch_us = r.u32();
      const process_us = r.u32();
      const count = r.u16();
      if (count > 256) throw new CodecError("annotation count exceeds 256");
      const annotations: Annotation[] = [];
      for (let i = 0; i < count; i++) {
        const kind = r.u8();
        const label = r.str();
        const confidence = r.u16() / 10000;
        const coordCount = r.u16();
        const coords: [number, number][] = [];
        for (let j = 0; j < coordCount; j++) {
          coords.push([r.u16() / 65535, r.u16() / 65535]);
        }
        annotations.push({ kind, label, confidence, coords });
      }
      let description: ResultDescription | null = null;
      if (r.u8() === 1) {
        description = { priority: r.u8(), text: r.str() };
      }
      msg = {
        type: "ResultMsg",
        frame_seq,
        processor_id,
        recv_to_dispatch_us,
        process_us,
        annotations,
        description,
      };
      break;
    }
    case MessageType.ERROR:
      msg = { type: "ErrorMsg", code: r.u8(), message: r.str() };
      break;
    case MessageType.PING:
      msg = { type: "Ping", token: r.bytes(8) };
      break;
    case MessageType.PONG:
      msg = { type: "Pong", token: r.bytes(8) };
      break;
    case MessageType.STATS_REQUEST:
      msg = { type: "StatsRequest", target_session: r.u32() };
      break;
    case MessageType.STATS:
      msg = {
        type: "StatsMsg",
        session_id: r.u32(),
        frames_received: r.u64(),
        frames_processed: r.u64(),
        frames_dropped: r.u64(),
        descriptions_suppressed: r.u64(),
      };
      break;
    case MessageType.SESSION_LIST_REQUEST:
      msg = { type: "SessionListRequest" };
      break;
    case MessageType.SESSION_LIST: {
      const count = r.u16();
      const entries: SessionEntry[] = [];
      for (let i = 0; i < count; i++) {
        entries.push({ session_id: r.u32(), name: r.str(), current_processor: r.str() });
      }
      msg = { type: "SessionList", entries };
      break;
    }
    case MessageType.SUBSCRIBE:
      msg = { type: "Subscribe", target_session: r.u32() };
      break;
    case MessageType.SUBSCRIBE_ACK:
      msg = { type: "SubscribeAck", target_session: r.u32(), status: r.u8() };
      break;
    default:
      throw new CodecError(`unknown type 0x${typeCode.toString(16)}`);
  }
  r.done();
  return msg;
}

export function ackStatusText(status: number): string {
  switch (status) {
    case AckStatus.OK:
      return "ok";
    case AckStatus.UNKNOWN_ID:
      return "unknown processor";
    case AckStatus.BAD_OPTIONS:
      return "bad options";
    case AckStatus.NO_SUCH_SESSION:
      return "no such session";
    case AckStatus.NOT_PERMITTED:
      return "not permitted";
    default:
      return `status ${status}`;
  }
}
