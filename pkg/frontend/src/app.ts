// DOM wiring for the operator console. All protocol and state logic lives
// in codec.ts / viewmodel.ts; this file only moves bytes between the
// WebSocket and the model and paints model events onto the page.

import {
  AckStatus,
  decodeMessage,
  encodeMessage,
  Priority,
  Role,
  WireMessage,
} from "./codec.js";
import { drawOverlay } from "./overlay.js";
import {
  ConsoleModel,
  ConsoleSessionView,
  formatTranscriptLine,
  LatestWins,
  TranscriptLine,
  UiEvent,
} from "./viewmodel.js";

const PROTOCOL_VERSION = 1;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function announce(message: string, priority: "polite" | "assertive") {
  const region = el<HTMLDivElement>("live-region");
  region.setAttribute("aria-live", priority);
  region.textContent = "";
  requestAnimationFrame(() => {
    region.textContent = message;
  });
}

class ConsoleApp {
  private socket: WebSocket | null = null;
  private model = new ConsoleModel();
  private renderQueue = new LatestWins<ConsoleSessionView>();
  private rafPending = false;

  private canvas = el<HTMLCanvasElement>("overlay");
  private transcriptList = el<HTMLOListElement>("transcript");
  private banner = el<HTMLDivElement>("banner");
  private ackLine = el<HTMLDivElement>("ack-line");
  private sessionSelect = el<HTMLSelectElement>("session-select");
  private processorSelect = el<HTMLSelectElement>("processor-select");
  private statsLine = el<HTMLDivElement>("stats-line");

  connect(url: string) {
    this.disconnect();
    this.model = new ConsoleModel();
    this.transcriptList.textContent = "";
    this.hideBanner();
    let socket: WebSocket;
    try {
      socket = new WebSocket(url);
    } catch (err) {
      this.showBanner(`cannot open ${url}: ${err}`);
      return;
    }
    socket.binaryType = "arraybuffer";
    this.socket = socket;

    socket.onopen = () => {
      this.send({ type: "Hello", version: PROTOCOL_VERSION, role: Role.CONSOLE, name: "console" });
      this.send({ type: "ListProcessors" });
      this.send({ type: "SessionListRequest" });
    };
    socket.onerror = () => this.showBanner(`connection to ${url} failed`);
    socket.onclose = () => this.showBanner(`disconnected from ${url}`);
    socket.onmessage = (ev: MessageEvent) => {
      let msg: WireMessage;
      try {
        msg = decodeMessage(new Uint8Array(ev.data as ArrayBuffer));
      } catch (err) {
        this.showBanner(`protocol error: ${err}`);
        socket.close();
        return;
      }
      for (const event of this.model.handle(msg)) this.apply(event);
    };
  }

  disconnect() {
    if (this.socket) {
      this.socket.onclose = null;
      this.socket.close();
      this.socket = null;
    }
  }

  private send(msg: WireMessage) {
    // Role contract: a console steers and observes, it never sends FRAME.
    if (msg.type === "FrameMsg") throw new Error("console must not send frames");
    if (this.socket && this.socket.readyState === WebSocket.OPEN) {
      const body = encodeMessage(msg);
      this.socket.send(body.buffer.slice(body.byteOffset, body.byteOffset + body.byteLength));
    }
  }

  private showBanner(text: string) {
    this.banner.textContent = text;
    this.banner.hidden = false;
    announce(text, "assertive");
  }

  private hideBanner() {
    this.banner.hidden = true;
  }

  private apply(event: UiEvent) {
    switch (event.kind) {
      case "connected":
        this.hideBanner();
        this.ackLine.textContent = `connected, console session ${event.sessionId}`;
        break;
      case "processors": {
        this.processorSelect.textContent = "";
        for (const p of event.entries) {
          const opt = document.createElement("option");
          opt.value = p.id;
          opt.textContent = `${p.display_name} (${p.id})`;
          this.processorSelect.appendChild(opt);
        }
        break;
      }
      case "sessions": {
        const previous = this.sessionSelect.value;
        this.sessionSelect.textContent = "";
        for (const view of event.views) {
          const opt = document.createElement("option");
          opt.value = String(view.sessionId);
          opt.textContent = `#${view.sessionId} ${view.name} [${view.currentProcessor}]`;
          this.sessionSelect.appendChild(opt);
        }
        if (previous) this.sessionSelect.value = previous;
        break;
      }
      case "subscribed":
        this.ackLine.textContent = `subscribed to session ${event.sessionId}`;
        break;
      case "ack": {
        const what = event.processorId ? `set ${event.processorId}` : "subscribe";
        const text = `${what} on #${event.targetSession}: ${event.statusText}`;
        this.ackLine.textContent = text;
        this.ackLine.dataset.status = String(event.status);
        this.ackLine.classList.toggle("ack-fail", !event.ok);
        if (!event.ok) announce(text, "assertive");
        break;
      }
      case "result":
        if (event.line) this.appendTranscript(event.line);
        this.renderQueue.submit(event.view);
        this.scheduleDraw();
        break;
      case "stats": {
        const s = event.view.latestStats;
        if (s) {
          this.statsLine.textContent =
            `#${event.view.sessionId}: received ${s.framesReceived}, ` +
            `processed ${s.framesProcessed}, dropped ${s.framesDropped}, ` +
            `suppressed ${s.descriptionsSuppressed}`;
        }
        break;
      }
      case "server-error":
        this.showBanner(`server error ${event.code}: ${event.message}`);
        break;
    }
  }

  private appendTranscript(line: TranscriptLine) {
    const item = document.createElement("li");
    item.textContent = formatTranscriptLine(line);
    if (line.priority === Priority.INTERRUPT) item.classList.add("interrupt");
    this.transcriptList.appendChild(item);
    announce(line.text, line.priority === Priority.INTERRUPT ? "assertive" : "polite");
    this.transcriptList.scrollTop = this.transcriptList.scrollHeight;
  }

  private scheduleDraw() {
    if (this.rafPending) return;
    this.rafPending = true;
    requestAnimationFrame(() => {
      this.rafPending = false;
      const view = this.renderQueue.take();
      if (!view) return;
      const ctx = this.canvas.getContext("2d");
      if (!ctx) return;
      const placeholder =
        view.latestFrameSeq === null
          ? "waiting for results"
          : `frame ${view.latestFrameSeq}: no annotations`;
      drawOverlay(ctx, view.latestAnnotations, this.canvas.width, this.canvas.height, placeholder);
    });
  }

  subscribeSelected() {
    const target = Number(this.sessionSelect.value);
    if (!Number.isFinite(target) || !this.sessionSelect.value) {
      this.ackLine.textContent = "no session selected";
      return;
    }
    this.send({ type: "Subscribe", target_session: target });
  }

  switchSelected(optionsText: string) {
    const target = Number(this.sessionSelect.value);
    const id = this.processorSelect.value;
    if (!this.sessionSelect.value || !id) {
      this.ackLine.textContent = "select a session and a processor first";
      return;
    }
    this.send({ type: "SetProcessor", target_session: target, id, options: optionsText });
  }

  requestStats() {
    const target = Number(this.sessionSelect.value);
    if (this.sessionSelect.value) this.send({ type: "StatsRequest", target_session: target });
  }

  refreshSessions() {
    this.send({ type: "SessionListRequest" });
  }
}

function defaultUrl(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("ws");
  return fromQuery ?? "ws://127.0.0.1:7001";
}

export function startApp() {
  const app = new ConsoleApp();
  const urlInput = el<HTMLInputElement>("ws-url");
  urlInput.value = defaultUrl();

  el<HTMLButtonElement>("connect-btn").addEventListener("click", () => app.connect(urlInput.value));
  el<HTMLButtonElement>("refresh-btn").addEventListener("click", () => app.refreshSessions());
  el<HTMLButtonElement>("subscribe-btn").addEventListener("click", () => app.subscribeSelected());
  el<HTMLButtonElement>("stats-btn").addEventListener("click", () => app.requestStats());
  el<HTMLButtonElement>("switch-btn").addEventListener("click", () =>
    app.switchSelected(el<HTMLInputElement>("options-input").value),
  );
  app.connect(urlInput.value);
}

if (typeof document !== "undefined" && document.getElementById("overlay")) {
  startApp();
}
