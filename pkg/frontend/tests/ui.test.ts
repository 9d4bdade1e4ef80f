// @vitest-environment jsdom
import { beforeEach, describe, expect, it } from "vitest";

import { CreatePayload, RatingAck, StepPayload } from "../src/api.js";
import { SessionApi, SessionFlow } from "../src/flow.js";
import { render } from "../src/ui.js";

class FakeApi implements SessionApi {
  steps: StepPayload[] = [];
  ratings: Array<[number, number]> = [];
  scenarioText: string | undefined;

  async createSession(): Promise<CreatePayload> {
    return {
      status: "awaiting_query",
      turn: 0,
      session_id: "sess-ui",
      ...(this.scenarioText !== undefined ? { scenario_text: this.scenarioText } : {}),
    };
  }

  async submitQuery(): Promise<StepPayload> {
    return this.steps.shift()!;
  }

  async submitAnswer(): Promise<StepPayload> {
    return this.steps.shift()!;
  }

  async submitRating(_sid: string, n: number, r: number): Promise<RatingAck> {
    this.ratings.push([n, r]);
    return { status: "done", turn: 1, recorded: true };
  }
}

const ASK: StepPayload = {
  status: "awaiting_answer",
  turn: 0,
  action: "ask",
  question: {
    id: "q0",
    text: "Is it about printing?",
    answers: ["yes", "no"],
    allow_not_visible: false,
  },
};

const ASK_GROUPED: StepPayload = {
  status: "awaiting_answer",
  turn: 1,
  action: "ask",
  question: {
    id: "q7",
    text: "What is your beak shape?",
    answers: ["hooked", "straight"],
    allow_not_visible: true,
  },
};

const DONE: StepPayload = {
  status: "done",
  turn: 2,
  action: "stop",
  prediction: {
    label_id: "l9",
    text: "How to clear a paper jam",
    top3: [
      { label_id: "l9", text: "How to clear a paper jam", probability: 0.8 },
      { label_id: "l2", text: "How to replace toner", probability: 0.15 },
      { label_id: "l5", text: "How to scan to email", probability: 0.05 },
    ],
    target: { label_id: "l9", text: "How to clear a paper jam" },
  },
};

function $(testid: string): HTMLElement | null {
  return document.querySelector(`[data-testid="${testid}"]`);
}

function click(testid: string): void {
  const node = $(testid);
  if (!node) throw new Error(`no element ${testid}`);
  (node as HTMLElement).click();
}

async function flush(): Promise<void> {
  await new Promise((resolve) => setTimeout(resolve, 0));
}

describe("ui rendering", () => {
  let api: FakeApi;
  let flow: SessionFlow;

  beforeEach(() => {
    document.body.innerHTML = '<div id="app"></div>';
    api = new FakeApi();
    flow = new SessionFlow(api);
  });

  function mount(): void {
    render(document.getElementById("app")!, flow);
  }

  it("drives a whole scripted session by clicking", async () => {
    api.scenarioText = "Your printer shows error E03.";
    api.steps = [ASK, ASK_GROUPED, DONE];
    mount();

    ($("scenario-input") as HTMLInputElement).value = "l9";
    click("start-session");
    await flush();
    expect($("scenario-text")!.textContent).toBe("Your printer shows error E03.");
    // the ground truth never shows before done
    expect(document.body.textContent).not.toContain("How to clear a paper jam");

    click("scenario-continue");
    ($("query-input") as HTMLTextAreaElement).value = "printer error";
    click("query-submit");
    await flush();
    expect($("question-text")!.textContent).toBe("Is it about printing?");
    expect($("answer-not-visible")).toBeNull();

    click("answer-0");
    await flush();
    expect($("question-text")!.textContent).toBe("What is your beak shape?");
    expect($("answer-not-visible")).not.toBeNull();

    click("answer-not-visible");
    await flush();
    expect($("reveal-predicted")!.textContent).toBe("How to clear a paper jam");
    expect($("reveal-target")!.textContent).toBe("How to clear a paper jam");

    const submit = $("rating-submit") as HTMLButtonElement;
    expect(submit.disabled).toBe(true);
    click("naturalness-4");
    expect(submit.disabled).toBe(true); // still missing the second score
    click("rationality-5");
    expect(submit.disabled).toBe(false);
    click("rating-submit");
    await flush();
    expect($("done-message")).not.toBeNull();
    expect(api.ratings).toEqual([[4, 5]]);
  });

  it("keeps empty queries from being sent", async () => {
    api.steps = [ASK];
    mount();
    click("start-session");
    await flush();
    ($("query-input") as HTMLTextAreaElement).value = "   ";
    click("query-submit");
    await flush();
    expect($("query-input")).not.toBeNull(); // still on the query screen
  });

  it("hides the target card for free sessions", async () => {
    const { target: _target, ...bare } = DONE.status === "done" ? DONE.prediction : null!;
    api.steps = [{ status: "done", turn: 0, action: "stop", prediction: bare }];
    mount();
    click("start-session");
    await flush();
    ($("query-input") as HTMLTextAreaElement).value = "paper jam";
    click("query-submit");
    await flush();
    expect($("reveal-predicted")).not.toBeNull();
    expect($("reveal-target")).toBeNull();
  });

  it("keeps debug info behind the toggle", async () => {
    api.steps = [ASK, DONE];
    mount();
    click("start-session");
    await flush();
    ($("query-input") as HTMLTextAreaElement).value = "x";
    click("query-submit");
    await flush();
    expect($("debug-turn")).toBeNull();

    click("debug-toggle");
    expect($("debug-turn")!.textContent).toBe("turn 0");

    click("answer-0");
    await flush();
    expect($("debug-top3")!.textContent).toContain("How to replace toner");

    click("debug-toggle");
    expect($("debug-top3")).toBeNull();
  });

  it("renders a scenario image only when a url is supplied", async () => {
    api.scenarioText = "A bird on a wire.";
    mount();
    click("start-session");
    await flush();
    expect($("scenario-image")).toBeNull();
  });
});
