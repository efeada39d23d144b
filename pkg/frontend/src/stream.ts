// Live-stream subscription with resume-on-reconnect. One subscription per
// open session; on drop it reopens from the last dt the view has seen, so
// the contract is at-least-once, in-order per session (the view tolerates
// replayed lines because activities deduplicate and frame dts are ordered).

export interface EventSourceLike {
  onmessage: ((ev: { data: string }) => void) | null;
  onerror: ((ev: unknown) => void) | null;
  close(): void;
}

export type EventSourceFactory = (url: string) => EventSourceLike;

export interface LiveStreamOptions {
  makeUrl: (fromDt: number) => string;
  onLine: (line: string) => void;
  onStateChange?: (connected: boolean) => void;
  lastDt: () => number;
  factory?: EventSourceFactory;
  reconnectDelayMs?: number;
}

export class LiveStream {
  private source: EventSourceLike | null = null;
  private closed = false;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(private opts: LiveStreamOptions) {}

  start(): void {
    this.closed = false;
    this.connect();
  }

  private connect(): void {
    const factory = this.opts.factory
      ?? ((url: string) => new EventSource(url) as unknown as EventSourceLike);
    this.source = factory(this.opts.makeUrl(this.opts.lastDt()));
    this.opts.onStateChange?.(true);
    this.source.onmessage = (ev) => this.opts.onLine(ev.data);
    this.source.onerror = () => {
      this.opts.onStateChange?.(false);
      this.source?.close();
      this.source = null;
      if (!this.closed) {
        this.timer = setTimeout(() => this.connect(),
                                this.opts.reconnectDelayMs ?? 2000);
      }
    };
  }

  stop(): void {
    this.closed = true;
    if (this.timer) clearTimeout(this.timer);
    this.source?.close();
    this.source = null;
    this.opts.onStateChange?.(false);
  }
}
