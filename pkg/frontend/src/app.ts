/**
 * Questionnaire flow: landing page with instructions and a demographics
 * form, one screen per survey step, and a completion screen.
 *
 * The service owns all ordering decisions; this app renders exactly the
 * left/right assignment each payload specifies, submits the elapsed
 * time it measured for the step, and never lets a step be skipped or
 * double-submitted (buttons disable on first click and the flow only
 * moves when the service acknowledges).
 */

import {
  AnswerWord,
  Demographics,
  PairwisePayload,
  SessionExpiredError,
  StepPayload,
  SurveyClient,
} from "./api.js";
import { renderPolicyCard } from "./cards.js";

export interface AppOptions {
  now?: () => number;
}

const DEMOGRAPHIC_QUESTIONS: Array<{
  key: keyof Demographics;
  label: string;
  options: string[];
}> = [
  {
    key: "age_group",
    label: "Age group",
    options: ["18-29", "30-39", "40-49", "50-59", "60-69", "70+", "declined"],
  },
  {
    key: "race_ethnicity",
    label: "Race / ethnicity",
    options: [
      "White",
      "Black or African American",
      "Asian",
      "Hispanic or Latino",
      "American Indian or Alaska Native",
      "Other",
      "declined",
    ],
  },
  {
    key: "gender",
    label: "Gender",
    options: ["Female", "Male", "Non-binary", "Other", "declined"],
  },
  {
    key: "works_in_healthcare",
    label: "Do you work in healthcare?",
    options: ["yes", "no", "declined"],
  },
];

const INSTRUCTIONS = [
  "Imagine you are a healthcare professional working at a hospital in " +
    "May 2020, before vaccines or established treatments were available. " +
    "More patients need critical-care beds, ventilators, and other " +
    "lifesaving resources than the hospital can provide.",
  "Your goal is to help choose a set of guidelines that decides which " +
    "patients receive critical care when there is not enough for everyone.",
  "You will see pairs of candidate guidelines side by side. Each one is " +
    "described by its projected outcomes: the total life-years it saves, " +
    "the share of patients who survive, and how survival and access to " +
    "care are distributed across age groups.",
  "For every pair, pick the guideline you would rather see adopted, or " +
    "say you are indifferent. There are no right or wrong answers; answer " +
    "by your own judgment of the trade-offs.",
];

export class QuestionnaireApp {
  private now: () => number;
  private stepShownAt = 0;
  private submitting = false;

  constructor(
    private root: HTMLElement,
    private client: SurveyClient,
    options: AppOptions = {},
  ) {
    this.now = options.now ?? (() => performance.now());
  }

  start(): void {
    this.renderLanding();
  }

  private clear(): HTMLElement {
    this.root.replaceChildren();
    const screen = document.createElement("div");
    screen.className = "screen";
    this.root.appendChild(screen);
    return screen;
  }

  private renderLanding(): void {
    const screen = this.clear();
    screen.classList.add("landing");
    const title = document.createElement("h1");
    title.textContent = "Critical-care guideline survey";
    screen.appendChild(title);
    for (const paragraph of INSTRUCTIONS) {
      const p = document.createElement("p");
      p.textContent = paragraph;
      screen.appendChild(p);
    }

    const form = document.createElement("form");
    form.className = "demographics";
    form.noValidate = true;
    for (const question of DEMOGRAPHIC_QUESTIONS) {
      const label = document.createElement("label");
      label.textContent = question.label;
      const select = document.createElement("select");
      select.name = question.key;
      for (const option of question.options) {
        const el = document.createElement("option");
        el.value = option;
        el.textContent = option;
        select.appendChild(el);
      }
      label.appendChild(select);
      form.appendChild(label);
    }
    const begin = document.createElement("button");
    begin.type = "submit";
    begin.id = "begin";
    begin.textContent = "Begin";
    form.appendChild(begin);
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      begin.disabled = true;
      const data = new FormData(form);
      const demographics = Object.fromEntries(
        DEMOGRAPHIC_QUESTIONS.map((q) => [q.key, String(data.get(q.key))]),
      ) as unknown as Demographics;
      void this.begin(demographics, begin);
    });
    screen.appendChild(form);
  }

  private async begin(demographics: Demographics, button: HTMLButtonElement) {
    try {
      await this.client.createSession(demographics);
    } catch (error) {
      button.disabled = false;
      this.renderError(error);
      return;
    }
    await this.advance();
  }

  private async advance(): Promise<void> {
    let payload: StepPayload;
    try {
      payload = await this.client.nextStep();
    } catch (error) {
      this.renderError(error);
      return;
    }
    this.submitting = false;
    if (payload.kind === "done") {
      this.renderDone();
      return;
    }
    if (payload.kind === "crt") {
      this.renderCrt(payload.step, payload.total_steps, payload.question);
    } else {
      this.renderPairwise(payload);
    }
    this.stepShownAt = this.now();
  }

  private progressLine(step: number, total: number): HTMLElement {
    const progress = document.createElement("div");
    progress.className = "progress";
    progress.textContent = `Step ${step + 1} of ${total}`;
    return progress;
  }

  private renderPairwise(payload: PairwisePayload): void {
    const screen = this.clear();
    screen.classList.add(payload.kind === "final" ? "final-step" : "pairwise-step");
    screen.appendChild(this.progressLine(payload.step, payload.total_steps));

    const heading = document.createElement("h2");
    heading.textContent =
      payload.kind === "final"
        ? "Last question: which of these two guidelines do you prefer?"
        : "Which guideline do you prefer?";
    screen.appendChild(heading);

    const row = document.createElement("div");
    row.className = "card-row";
    const left = renderPolicyCard(payload.left);
    left.classList.add("left-card");
    const right = renderPolicyCard(payload.right);
    right.classList.add("right-card");
    row.appendChild(left);
    row.appendChild(right);
    screen.appendChild(row);

    const buttons = document.createElement("div");
    buttons.className = "answer-buttons";
    const choices: Array<[AnswerWord, string]> = [
      ["left", "Prefer left"],
      ["indifferent", "Indifferent"],
      ["right", "Prefer right"],
    ];
    for (const [word, label] of choices) {
      const button = document.createElement("button");
      button.type = "button";
      button.dataset.answer = word;
      button.textContent = label;
      button.addEventListener("click", () => {
        void this.submitPairwise(payload.step, word, buttons);
      });
      buttons.appendChild(button);
    }
    screen.appendChild(buttons);
  }

  private async submitPairwise(
    step: number,
    word: AnswerWord,
    buttons: HTMLElement,
  ): Promise<void> {
    if (this.submitting) return;
    this.submitting = true;
    for (const button of buttons.querySelectorAll("button")) {
      button.disabled = true;
    }
    const elapsed = Math.max(0, this.now() - this.stepShownAt);
    try {
      await this.client.submitAnswer({
        step,
        response: word,
        elapsed_ms: elapsed,
      });
    } catch (error) {
      this.renderError(error);
      return;
    }
    await this.advance();
  }

  private renderCrt(step: number, total: number, question: string): void {
    const screen = this.clear();
    screen.classList.add("crt-step");
    screen.appendChild(this.progressLine(step, total));
    const heading = document.createElement("h2");
    heading.textContent = "A quick question before you continue";
    screen.appendChild(heading);
    const prompt = document.createElement("p");
    prompt.className = "crt-question";
    prompt.textContent = question;
    screen.appendChild(prompt);

    const area = document.createElement("textarea");
    area.rows = 3;
    screen.appendChild(area);
    const note = document.createElement("p");
    note.className = "hint";
    note.textContent = "Answer in your own words.";
    screen.appendChild(note);

    const submit = document.createElement("button");
    submit.type = "button";
    submit.textContent = "Submit answer";
    submit.addEventListener("click", () => {
      const text = area.value.trim();
      if (!text) {
        note.textContent = "Please type an answer first.";
        return;
      }
      if (this.submitting) return;
      this.submitting = true;
      submit.disabled = true;
      area.disabled = true;
      const elapsed = Math.max(0, this.now() - this.stepShownAt);
      void this.client
        .submitAnswer({ step, text, elapsed_ms: elapsed })
        .then(() => this.advance())
        .catch((error) => this.renderError(error));
    });
    screen.appendChild(submit);
  }

  private renderDone(): void {
    const screen = this.clear();
    screen.classList.add("done");
    const heading = document.createElement("h2");
    heading.textContent = "All done — thank you!";
    screen.appendChild(heading);
    const message = document.createElement("p");
    message.textContent =
      "Your answers have been recorded. You can close this window.";
    screen.appendChild(message);
  }

  private renderError(error: unknown): void {
    const screen = this.clear();
    screen.classList.add("error");
    const heading = document.createElement("h2");
    const message = document.createElement("p");
    if (error instanceof SessionExpiredError) {
      heading.textContent = "Session expired";
      message.textContent =
        "This session ran past its time limit and can no longer accept answers.";
    } else {
      heading.textContent = "Something went wrong";
      message.textContent =
        error instanceof Error ? error.message : "Unexpected error.";
    }
    screen.appendChild(heading);
    screen.appendChild(message);
  }
}
