/** Session state machine for the clarification loop.
 *
 * Holds the one active session per tab and enforces the interaction
 * contract client-side: answers can only come from the offered list, the
 * ground truth is only ever shown from a done payload, and rating needs
 * both Likert scores. Transport failures park the flow on a retryable
 * error screen; session-state errors (404/409/410) reset to the start.
 */

import {
  ApiError,
  CreatePayload,
  NetworkError,
  NOT_VISIBLE,
  PredictionPayload,
  QuestionPayload,
  RatingAck,
  StepPayload,
} from "./api.js";

export interface SessionApi {
  createSession(scenarioId?: string | null): Promise<CreatePayload>;
  submitQuery(sessionId: string, text: string): Promise<StepPayload>;
  submitAnswer(sessionId: string, answer: string): Promise<StepPayload>;
  submitRating(sessionId: string, naturalness: number, rationality: number): Promise<RatingAck>;
}

export type Screen =
  | { kind: "setup"; message?: string }
  | { kind: "scenario"; text: string; imageUrl?: string }
  | { kind: "query"; scenarioText?: string }
  | { kind: "question"; turn: number; question: QuestionPayload; options: string[] }
  | { kind: "reveal"; prediction: PredictionPayload; turns: number }
  | { kind: "done" }
  | { kind: "error"; message: string; canRetry: boolean };

export function answerOptions(question: QuestionPayload): string[] {
  return question.allow_not_visible ? [...question.answers, NOT_VISIBLE] : [...question.answers];
}

export class SessionFlow {
  screen: Screen = { kind: "setup" };
  debug = false;

  private sessionId: string | null = null;
  private scenarioText: string | undefined;
  private listeners: Array<(screen: Screen) => void> = [];
  private lastAction: (() => Promise<void>) | null = null;

  constructor(private readonly api: SessionApi) {}

  subscribe(listener: (screen: Screen) => void): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  toggleDebug(): void {
    this.debug = !this.debug;
    this.emit();
  }

  reset(message?: string): void {
    this.sessionId = null;
    this.scenarioText = undefined;
    this.lastAction = null;
    this.setScreen({ kind: "setup", message });
  }

  async start(scenarioId?: string | null): Promise<void> {
    await this.perform(async () => {
      const created = await this.api.createSession(scenarioId);
      this.sessionId = created.session_id;
      this.scenarioText = created.scenario_text;
      if (created.scenario_text !== undefined) {
        this.setScreen({
          kind: "scenario",
          text: created.scenario_text,
          imageUrl: created.image_url,
        });
      } else {
        this.setScreen({ kind: "query" });
      }
    });
  }

  /** Scenario card acknowledged; move on to typing the initial query. */
  beginQuery(): void {
    if (this.screen.kind !== "scenario") {
      throw new Error(`beginQuery from ${this.screen.kind}`);
    }
    this.setScreen({ kind: "query", scenarioText: this.scenarioText });
  }

  async submitQuery(text: string): Promise<void> {
    if (this.screen.kind !== "query") {
      throw new Error(`submitQuery from ${this.screen.kind}`);
    }
    const sid = this.requireSession();
    await this.perform(async () => {
      this.applyStep(await this.api.submitQuery(sid, text));
    });
  }

  /** Answer the pending question by option index; free text has no path in. */
  async answer(index: number): Promise<void> {
    if (this.screen.kind !== "question") {
      throw new Error(`answer from ${this.screen.kind}`);
    }
    const options = this.screen.options;
    if (!Number.isInteger(index) || index < 0 || index >= options.length) {
      throw new RangeError(`answer index ${index} outside 0..${options.length - 1}`);
    }
    const sid = this.requireSession();
    const chosen = options[index];
    await this.perform(async () => {
      this.applyStep(await this.api.submitAnswer(sid, chosen));
    });
  }

  async rate(naturalness: number, rationality: number): Promise<void> {
    if (this.screen.kind !== "reveal") {
      throw new Error(`rate from ${this.screen.kind}`);
    }
    for (const score of [naturalness, rationality]) {
      if (!Number.isInteger(score) || score < 1 || score > 5) {
        throw new RangeError(`Likert score ${score} outside 1..5`);
      }
    }
    const sid = this.requireSession();
    await this.perform(async () => {
      await this.api.submitRating(sid, naturalness, rationality);
      this.setScreen({ kind: "done" });
    });
  }

  async retry(): Promise<void> {
    if (this.screen.kind !== "error" || !this.screen.canRetry || !this.lastAction) {
      throw new Error("nothing to retry");
    }
    await this.perform(this.lastAction);
  }

  private requireSession(): string {
    if (this.sessionId === null) {
      throw new Error("no active session");
    }
    return this.sessionId;
  }

  private applyStep(step: StepPayload): void {
    if (step.status === "awaiting_answer") {
      this.setScreen({
        kind: "question",
        turn: step.turn,
        question: step.question,
        options: answerOptions(step.question),
      });
    } else {
      this.setScreen({ kind: "reveal", prediction: step.prediction, turns: step.turn });
    }
  }

  private async perform(action: () => Promise<void>): Promise<void> {
    this.lastAction = action;
    try {
      await action();
    } catch (err) {
      if (err instanceof NetworkError) {
        this.setScreen({
          kind: "error",
          message: "could not reach the service; check the connection and retry",
          canRetry: true,
        });
      } else if (err instanceof ApiError && [404, 409, 410].includes(err.status)) {
        this.reset(`session error (${err.status} ${err.detail}); starting over`);
      } else if (err instanceof ApiError) {
        this.setScreen({ kind: "error", message: err.detail, canRetry: false });
      } else {
        throw err;
      }
    }
  }

  private setScreen(screen: Screen): void {
    this.screen = screen;
    this.emit();
  }

  private emit(): void {
    for (const listener of [...this.listeners]) {
      listener(this.screen);
    }
  }
}
