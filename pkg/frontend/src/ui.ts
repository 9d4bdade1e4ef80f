/** DOM rendering for each screen of the session flow.
 *
 * Pure view layer: every user action maps to one SessionFlow method, and the
 * whole screen re-renders on flow changes. Elements carry data-testid
 * attributes so tests can drive the UI the way a user would.
 */

import { PredictionPayload } from "./api.js";
import { Screen, SessionFlow } from "./flow.js";

type Child = Node | string;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: Child[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  for (const child of children) {
    node.append(child);
  }
  return node;
}

function button(label: string, testid: string, onClick: () => void): HTMLButtonElement {
  const b = el("button", { "data-testid": testid, type: "button" }, label);
  b.addEventListener("click", onClick);
  return b;
}

/** Five radio buttons, 1..5; reports the picked score or null. */
function likert(
  name: string,
  caption: string,
  onChange: () => void,
): { element: HTMLElement; value: () => number | null } {
  let picked: number | null = null;
  const row = el("div", { class: "likert-row" });
  for (let score = 1; score <= 5; score++) {
    const input = el("input", {
      type: "radio",
      name,
      value: String(score),
      "data-testid": `${name}-${score}`,
    });
    input.addEventListener("change", () => {
      picked = score;
      onChange();
    });
    row.append(el("label", { class: "likert-option" }, input, String(score)));
  }
  const element = el("fieldset", { class: "likert" }, el("legend", {}, caption), row);
  return { element, value: () => picked };
}

function renderSetup(flow: SessionFlow, screen: Screen & { kind: "setup" }, defaultScenario: string | null): HTMLElement {
  const box = el("div", { class: "card" });
  if (screen.message) {
    box.append(el("p", { class: "notice", "data-testid": "setup-message" }, screen.message));
  }
  const scenarioInput = el("input", {
    type: "text",
    placeholder: "scenario label id (optional)",
    "data-testid": "scenario-input",
  });
  if (defaultScenario) {
    scenarioInput.value = defaultScenario;
  }
  box.append(
    el("h2", {}, "Start a session"),
    el("p", {}, "Leave the scenario blank to describe your own problem."),
    scenarioInput,
    button("Start", "start-session", () => {
      void flow.start(scenarioInput.value.trim() || null);
    }),
  );
  return box;
}

function renderScenario(flow: SessionFlow, screen: Screen & { kind: "scenario" }): HTMLElement {
  const box = el(
    "div",
    { class: "card" },
    el("h2", {}, "Your scenario"),
    el("p", { "data-testid": "scenario-text" }, screen.text),
  );
  if (screen.imageUrl) {
    box.append(el("img", { src: screen.imageUrl, alt: "scenario", "data-testid": "scenario-image" }));
  }
  box.append(
    el("p", {}, "Read it, then describe the situation in your own words."),
    button("Continue", "scenario-continue", () => flow.beginQuery()),
  );
  return box;
}

function renderQuery(flow: SessionFlow, screen: Screen & { kind: "query" }): HTMLElement {
  const input = el("textarea", {
    rows: "3",
    placeholder: "Describe what you need…",
    "data-testid": "query-input",
  });
  const submit = button("Send", "query-submit", () => {
    const text = input.value.trim();
    if (text) {
      void flow.submitQuery(text);
    }
  });
  const box = el("div", { class: "card" }, el("h2", {}, "What can we help with?"));
  if (screen.scenarioText) {
    box.append(el("p", { class: "muted", "data-testid": "scenario-reminder" }, screen.scenarioText));
  }
  box.append(input, submit);
  return box;
}

function renderQuestion(flow: SessionFlow, screen: Screen & { kind: "question" }): HTMLElement {
  const box = el("div", { class: "card" }, el("h2", { "data-testid": "question-text" }, screen.question.text));
  if (flow.debug) {
    box.append(el("p", { class: "muted", "data-testid": "debug-turn" }, `turn ${screen.turn}`));
  }
  const answers = el("div", { class: "answers" });
  screen.options.forEach((option, index) => {
    const isNv = screen.question.allow_not_visible && index === screen.options.length - 1;
    const b = button(option, isNv ? "answer-not-visible" : `answer-${index}`, () => {
      void flow.answer(index);
    });
    if (isNv) {
      b.classList.add("nv");
    }
    answers.append(b);
  });
  box.append(answers);
  return box;
}

function predictionCard(title: string, testid: string, labelText: string): HTMLElement {
  return el(
    "div",
    { class: "reveal-card" },
    el("h3", {}, title),
    el("p", { "data-testid": testid }, labelText),
  );
}

function renderReveal(flow: SessionFlow, screen: Screen & { kind: "reveal" }): HTMLElement {
  const pred: PredictionPayload = screen.prediction;
  const pair = el("div", { class: "reveal-pair" }, predictionCard("Our best match", "reveal-predicted", pred.text));
  if (pred.target) {
    pair.append(predictionCard("The actual answer", "reveal-target", pred.target.text));
  }
  const box = el("div", { class: "card" }, el("h2", {}, "Here is what we found"), pair);
  if (flow.debug) {
    const rows = pred.top3.map((t) =>
      el("li", {}, `${t.text} (${t.probability.toFixed(3)})`),
    );
    box.append(el("ol", { class: "muted", "data-testid": "debug-top3" }, ...rows));
  }

  const survey = el("div", { class: "survey" }, el("h3", {}, "How did the conversation feel?"));
  const submit = el("button", { "data-testid": "rating-submit", type: "button" }, "Submit rating") as HTMLButtonElement;
  submit.disabled = true;
  const sync = () => {
    submit.disabled = nat.value() === null || rat.value() === null;
  };
  const nat = likert("naturalness", "The questions felt natural", sync);
  const rat = likert("rationality", "The questions were reasonable to ask", sync);
  submit.addEventListener("click", () => {
    const n = nat.value();
    const r = rat.value();
    if (n !== null && r !== null) {
      void flow.rate(n, r);
    }
  });
  survey.append(nat.element, rat.element, submit);
  box.append(survey);
  return box;
}

function renderDone(flow: SessionFlow): HTMLElement {
  return el(
    "div",
    { class: "card" },
    el("h2", { "data-testid": "done-message" }, "Thanks for the feedback!"),
    button("Start a new session", "new-session", () => flow.reset()),
  );
}

function renderError(flow: SessionFlow, screen: Screen & { kind: "error" }): HTMLElement {
  const box = el(
    "div",
    { class: "card error" },
    el("h2", {}, "Something went wrong"),
    el("p", { "data-testid": "error-message" }, screen.message),
  );
  if (screen.canRetry) {
    box.append(button("Retry", "error-retry", () => void flow.retry()));
  }
  box.append(button("Start over", "error-reset", () => flow.reset()));
  return box;
}

export interface RenderOptions {
  scenarioId?: string | null;
}

export function render(root: HTMLElement, flow: SessionFlow, options: RenderOptions = {}): void {
  const paint = (screen: Screen) => {
    root.replaceChildren();
    const bar = el("div", { class: "topbar" }, el("strong", {}, "clarq"));
    const debugToggle = el("input", { type: "checkbox", "data-testid": "debug-toggle" });
    debugToggle.checked = flow.debug;
    debugToggle.addEventListener("change", () => flow.toggleDebug());
    bar.append(el("label", { class: "muted" }, debugToggle, " debug"));
    root.append(bar);

    switch (screen.kind) {
      case "setup":
        root.append(renderSetup(flow, screen, options.scenarioId ?? null));
        break;
      case "scenario":
        root.append(renderScenario(flow, screen));
        break;
      case "query":
        root.append(renderQuery(flow, screen));
        break;
      case "question":
        root.append(renderQuestion(flow, screen));
        break;
      case "reveal":
        root.append(renderReveal(flow, screen));
        break;
      case "done":
        root.append(renderDone(flow));
        break;
      case "error":
        root.append(renderError(flow, screen));
        break;
    }
  };
  flow.subscribe(paint);
  paint(flow.screen);
}
