// Space-bar capture for the lane-change decision. Keyboard auto-repeat is
// suppressed so one physical press produces exactly one message; the
// per-episode debounce lives in the client.

export interface KeyEventLike {
  code: string;
  repeat: boolean;
  preventDefault(): void;
}

export class DecisionInput {
  private spaceDown = false;

  constructor(private onDecision: () => void) {}

  keydown(event: KeyEventLike): void {
    if (event.code !== "Space") {
      return;
    }
    event.preventDefault();
    if (event.repeat || this.spaceDown) {
      return;
    }
    this.spaceDown = true;
    this.onDecision();
  }

  keyup(event: KeyEventLike): void {
    if (event.code === "Space") {
      this.spaceDown = false;
    }
  }

  bind(target: Pick<Window, "addEventListener">): void {
    target.addEventListener("keydown", (e) => this.keydown(e as KeyboardEvent));
    target.addEventListener("keyup", (e) => this.keyup(e as KeyboardEvent));
  }
}
