/**
 * Single-page rating app.
 *
 * Flow: paste rater id + token -> worklist of assigned diagrams -> rating
 * view with the source text and the rendered diagram side by side, the
 * rubric form with live-computed C1/C3, and submission -> reliability
 * dashboard.  No client persistence beyond the in-flight form state; every
 * submitted value is recomputed and stored server-side.
 */

import { ApiError, ServiceClient, type AssignmentList, type DiagramDetail } from "./api";
import { CRITERIA, formatInterval, formatNumber, loadDashboard } from "./dashboard";
import { RatingForm, type SubscoreName } from "./form";
import {
  HALLUCINATION_TAGS,
  HALLUCINATION_TAG_LABELS,
  LAYOUT_FLAG_LABELS,
  SCORE_MAX,
  SCORE_MIN,
} from "./rubric";
import "./style.css";

interface Session {
  raterId: string;
  client: ServiceClient;
}

const root = document.querySelector<HTMLElement>("#app");
if (!root) throw new Error("missing #app mount point");
const app: HTMLElement = root;

let session: Session | null = null;

// ── small DOM helpers ──

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  node.append(...children);
  return node;
}

function clear(node: HTMLElement): void {
  while (node.firstChild) node.removeChild(node.firstChild);
}

function banner(kind: "error" | "info", text: string): HTMLElement {
  return el("div", { class: `banner ${kind}`, role: "status" }, text);
}

/** 1..5 select with an empty placeholder; the only values offered are in range. */
function scoreSelect(label: string, onChange: (value: number) => void): HTMLElement {
  const select = el("select");
  select.append(el("option", { value: "" }, "—"));
  for (let v = SCORE_MIN; v <= SCORE_MAX; v++) {
    select.append(el("option", { value: String(v) }, String(v)));
  }
  select.addEventListener("change", () => {
    if (select.value !== "") onChange(Number(select.value));
  });
  return el("label", { class: "score-field" }, label, select);
}

// ── login view ──

function showLogin(message?: string): void {
  clear(app);
  const raterInput = el("input", { placeholder: "rater id", autocomplete: "username" });
  const tokenInput = el("input", { placeholder: "access token", type: "password" });
  const form = el("form", { class: "login" },
    el("h1", {}, "Diagram rating"),
    message ? banner("error", message) : "",
    el("label", {}, "Rater", raterInput),
    el("label", {}, "Token", tokenInput),
    el("button", { type: "submit" }, "Start session"),
  );
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const raterId = raterInput.value.trim();
    const token = tokenInput.value.trim();
    if (!raterId || !token) return;
    session = { raterId, client: new ServiceClient("", token) };
    void showWorklist();
  });
  app.append(form);
}

// ── worklist view ──

async function showWorklist(): Promise<void> {
  if (!session) return showLogin();
  clear(app);
  app.append(el("p", { class: "loading" }, "Loading assignments…"));
  let assignments: AssignmentList;
  try {
    assignments = await session.client.assignments(session.raterId);
  } catch (error) {
    if (error instanceof ApiError && (error.status === 401 || error.status === 403)) {
      return showLogin(error.detail);
    }
    clear(app);
    app.append(banner("error", String(error)));
    return;
  }
  clear(app);
  const list = el("ul", { class: "worklist" });
  for (const diagramId of assignments.pending) {
    const button = el("button", {}, `Rate ${diagramId}`);
    button.addEventListener("click", () => void showRating(diagramId));
    list.append(el("li", {}, button));
  }
  for (const diagramId of assignments.submitted) {
    list.append(el("li", { class: "done" }, `${diagramId} — submitted`));
  }
  const dashButton = el("button", { class: "secondary" }, "Reliability dashboard");
  dashButton.addEventListener("click", () => void showDashboard());
  app.append(
    el("h1", {}, `Assignments for ${assignments.rater_id}`),
    el("p", {}, `${assignments.pending.length} pending, ${assignments.submitted.length} submitted`),
    list,
    dashButton,
  );
}

// ── rating view ──

/** Wheel-zoom and drag-pan so full-width layout defects stay inspectable. */
function attachZoomPan(viewport: HTMLElement, image: HTMLImageElement): void {
  let scale = 1;
  let tx = 0;
  let ty = 0;
  let dragging = false;
  let lastX = 0;
  let lastY = 0;
  const apply = () => {
    image.style.transform = `translate(${tx}px, ${ty}px) scale(${scale})`;
  };
  viewport.addEventListener("wheel", (event) => {
    event.preventDefault();
    const factor = event.deltaY < 0 ? 1.2 : 1 / 1.2;
    scale = Math.min(16, Math.max(0.1, scale * factor));
    apply();
  }, { passive: false });
  viewport.addEventListener("pointerdown", (event) => {
    dragging = true;
    lastX = event.clientX;
    lastY = event.clientY;
    viewport.setPointerCapture(event.pointerId);
  });
  viewport.addEventListener("pointermove", (event) => {
    if (!dragging) return;
    tx += event.clientX - lastX;
    ty += event.clientY - lastY;
    lastX = event.clientX;
    lastY = event.clientY;
    apply();
  });
  viewport.addEventListener("pointerup", () => {
    dragging = false;
  });
  viewport.addEventListener("dblclick", () => {
    scale = 1;
    tx = 0;
    ty = 0;
    apply();
  });
}

async function showRating(diagramId: string): Promise<void> {
  if (!session) return showLogin();
  const { client } = session;
  clear(app);
  app.append(el("p", { class: "loading" }, `Loading ${diagramId}…`));
  let detail: DiagramDetail;
  try {
    detail = await client.getDiagram(diagramId);
  } catch (error) {
    clear(app);
    app.append(banner("error", String(error)));
    return;
  }

  const form = new RatingForm();
  const c1Out = el("output", {}, "—");
  const c3Out = el("output", {}, "5");
  const refresh = () => {
    c1Out.textContent = form.c1 === null ? "—" : String(form.c1);
    c3Out.textContent = String(form.c3);
    submitButton.disabled = !form.complete;
  };

  const subscoreRow = (name: SubscoreName, label: string) =>
    scoreSelect(label, (value) => {
      form.setSubscore(name, value);
      refresh();
    });

  const checklist = el("fieldset", {}, el("legend", {}, "Layout issues (C3 derives from the count)"));
  LAYOUT_FLAG_LABELS.forEach((label, index) => {
    const box = el("input", { type: "checkbox" });
    box.addEventListener("change", () => {
      form.setFlag(index, box.checked);
      refresh();
    });
    checklist.append(el("label", { class: "flag" }, box, label));
  });

  const tagFieldset = el("fieldset", {}, el("legend", {}, "Hallucinations observed"));
  for (const tag of HALLUCINATION_TAGS) {
    const box = el("input", { type: "checkbox" });
    box.addEventListener("change", () => form.setTag(tag, box.checked));
    tagFieldset.append(el("label", { class: "flag" }, box, HALLUCINATION_TAG_LABELS[tag]));
  }

  const status = el("div", { class: "status" });
  const submitButton = el("button", { type: "submit" }, "Submit scores");
  submitButton.disabled = true;

  const ratingForm = el("form", { class: "rating-form" },
    el("div", { class: "derived" },
      subscoreRow("l1", "L1 structure"),
      subscoreRow("l2", "L2 completeness"),
      subscoreRow("l3", "L3 granularity"),
      el("p", { class: "live" }, "C1 (computed): ", c1Out),
    ),
    subscoreRow("c2", "C2 connectivity"),
    checklist,
    el("p", { class: "live" }, "C3 (computed): ", c3Out),
    tagFieldset,
    status,
    submitButton,
  );
  ratingForm.addEventListener("submit", (event) => {
    event.preventDefault();
    void (async () => {
      clear(status);
      try {
        const stored = await client.submitScores(diagramId, form.toPayload());
        status.append(banner("info",
          `Stored: C1=${stored.c1} C2=${stored.c2} C3=${stored.c3} (server-computed)`));
        submitButton.disabled = true;
        setTimeout(() => void showWorklist(), 600);
      } catch (error) {
        status.append(banner("error", String(error)));
      }
    })();
  });

  const viewport = el("div", { class: "viewport" });
  if (detail.has_image) {
    const image = el("img", { alt: `diagram ${diagramId}` });
    image.src = client.imagePath(diagramId);
    attachZoomPan(viewport, image);
    viewport.append(image);
  } else {
    viewport.append(el("p", { class: "placeholder" }, "No rendered image stored for this diagram."));
  }

  const back = el("button", { class: "secondary" }, "Back to assignments");
  back.addEventListener("click", () => void showWorklist());

  clear(app);
  app.append(
    el("h1", {}, `Diagram ${diagramId}`),
    el("p", { class: "meta" }, `difficulty: ${detail.difficulty}`),
    el("div", { class: "split" },
      el("section", { class: "source" }, el("h2", {}, "Source text"), el("p", {}, detail.source_text)),
      el("section", { class: "diagram" }, el("h2", {}, "Diagram"), viewport),
    ),
    ratingForm,
    back,
  );
}

// ── dashboard view ──

async function showDashboard(): Promise<void> {
  if (!session) return showLogin();
  clear(app);
  app.append(el("p", { class: "loading" }, "Loading reliability summary…"));
  try {
    const model = await loadDashboard(session.client);
    clear(app);
    const table = el("table", { class: "irr" },
      el("thead", {}, el("tr", {},
        el("th", {}, "criterion"),
        el("th", {}, "α̂ (ordinal)"),
        el("th", {}, "95% CI"),
        el("th", {}, "Kendall W"),
        el("th", {}, "p-value"),
        el("th", {}, "units"),
      )),
    );
    const body = el("tbody");
    for (const row of model.rows) {
      body.append(el("tr", {},
        el("td", {}, row.criterion.toUpperCase()),
        el("td", {}, formatNumber(row.alpha_hat)),
        el("td", {}, formatInterval(row.ci_low, row.ci_high)),
        el("td", {}, formatNumber(row.w)),
        el("td", {}, formatNumber(row.p_value, 4)),
        el("td", {}, String(row.n_units)),
      ));
    }
    table.append(body);
    const back = el("button", { class: "secondary" }, "Back to assignments");
    back.addEventListener("click", () => void showWorklist());
    app.append(
      el("h1", {}, "Inter-rater reliability"),
      el("p", {}, `${model.completedUnits} of ${model.totalUnits} units completed by all assigned raters`),
      model.message ? banner("info", model.message) : "",
      model.rows.length ? table : el("p", {}, `No reliability estimates yet (criteria: ${CRITERIA.join(", ")}).`),
      back,
    );
  } catch (error) {
    clear(app);
    app.append(banner("error", String(error)));
  }
}

showLogin();
