/** Boot the single-page client: base URL from ?api=, optional ?scenario=. */

import { ApiClient } from "./api.js";
import { SessionFlow } from "./flow.js";
import { render } from "./ui.js";

const OPEN_SESSION_KEY = "clarq-session-open";

function boot(): void {
  const params = new URLSearchParams(window.location.search);
  const base = params.get("api") ?? window.location.origin;
  const flow = new SessionFlow(new ApiClient(base));

  if (window.sessionStorage.getItem(OPEN_SESSION_KEY)) {
    // Sessions cannot be resumed across a refresh; say so and start clean.
    flow.reset("Your previous session was interrupted and has been restarted.");
    window.sessionStorage.removeItem(OPEN_SESSION_KEY);
  }
  flow.subscribe((screen) => {
    if (screen.kind === "setup" || screen.kind === "done") {
      window.sessionStorage.removeItem(OPEN_SESSION_KEY);
    } else {
      window.sessionStorage.setItem(OPEN_SESSION_KEY, "1");
    }
  });

  const root = document.getElementById("app");
  if (!root) {
    throw new Error("missing #app mount point");
  }
  render(root, flow, { scenarioId: params.get("scenario") });
}

boot();
