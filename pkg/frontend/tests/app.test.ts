import { beforeEach, describe, expect, it } from "vitest";

import { SurveyClient } from "../src/api.js";
import { QuestionnaireApp } from "../src/app.js";
import { MockService } from "./mock_service.js";

class FakeClock {
  t = 0;
  now = () => this.t;
  advance(ms: number) {
    this.t += ms;
  }
}

async function flush(times = 12): Promise<void> {
  for (let i = 0; i < times; i++) {
    await new Promise((resolve) => setTimeout(resolve, 0));
  }
}

function setup(mock = new MockService()) {
  document.body.innerHTML = '<div id="app"></div>';
  const root = document.getElementById("app")!;
  const clock = new FakeClock();
  const client = new SurveyClient("http://svc", {
    fetchImpl: mock.fetch,
    sleep: async () => {},
  });
  const app = new QuestionnaireApp(root, client, { now: clock.now });
  app.start();
  return { root, app, clock, mock };
}

async function begin(root: HTMLElement): Promise<void> {
  (root.querySelector("#begin") as HTMLButtonElement).click();
  await flush();
}

function clickAnswer(root: HTMLElement, word: string): void {
  const button = root.querySelector(
    `button[data-answer="${word}"]`,
  ) as HTMLButtonElement;
  expect(button, `answer button ${word}`).toBeTruthy();
  button.click();
}

async function answerCrt(root: HTMLElement, text: string): Promise<void> {
  const area = root.querySelector("textarea") as HTMLTextAreaElement;
  area.value = text;
  const buttons = Array.from(root.querySelectorAll("button"));
  (buttons[buttons.length - 1] as HTMLButtonElement).click();
  await flush();
}

describe("questionnaire flow", () => {
  beforeEach(() => {
    document.body.innerHTML = "";
  });

  it("walks the whole scripted session to completion", async () => {
    const { root, clock, mock } = setup();

    // landing screen: instructions and the demographics form
    expect(root.querySelector(".landing")).toBeTruthy();
    expect(root.querySelectorAll("select").length).toBe(4);
    await begin(root);

    // step 0: pairwise, sides exactly as the service specified
    expect(root.querySelector(".pairwise-step")).toBeTruthy();
    expect(root.querySelector(".progress")!.textContent).toBe("Step 1 of 6");
    const cards = root.querySelectorAll(".policy-card");
    expect(cards.length).toBe(2);
    expect((cards[0] as HTMLElement).dataset.policy).toBe("3");
    expect((cards[1] as HTMLElement).dataset.policy).toBe("7");

    clock.advance(21_000);
    clickAnswer(root, "left");
    await flush();

    // steps 1-3: free-text interlude
    for (let i = 0; i < 3; i++) {
      expect(root.querySelector(".crt-step"), `crt screen ${i}`).toBeTruthy();
      clock.advance(8_000 + i);
      await answerCrt(root, "five somethings");
    }

    // step 4: second pairwise
    expect(root.querySelector(".pairwise-step")).toBeTruthy();
    clock.advance(5_500);
    clickAnswer(root, "right");
    await flush();

    // step 5: final shows the same policy on both sides, indifferent works
    expect(root.querySelector(".final-step")).toBeTruthy();
    const finalCards = root.querySelectorAll(".policy-card");
    expect((finalCards[0] as HTMLElement).dataset.policy).toBe("7");
    expect((finalCards[1] as HTMLElement).dataset.policy).toBe("7");
    clock.advance(4_000);
    clickAnswer(root, "indifferent");
    await flush();

    expect(root.querySelector(".done")).toBeTruthy();

    // nothing skipped: steps answered strictly in order
    expect(mock.answers.map((a) => a.step)).toEqual([0, 1, 2, 3, 4, 5]);
    // elapsed times are positive and match the harness clock
    expect(mock.answers.map((a) => a.elapsed_ms)).toEqual([
      21_000, 8_000, 8_001, 8_002, 5_500, 4_000,
    ]);
    expect(mock.answers[0].response).toBe("left");
    expect(mock.answers[5].response).toBe("indifferent");
    expect(mock.answers[1].text).toBe("five somethings");
  });

  it("disables buttons on first click so a step cannot double-submit", async () => {
    const { root, clock, mock } = setup();
    await begin(root);
    clock.advance(1_000);
    const button = root.querySelector(
      'button[data-answer="left"]',
    ) as HTMLButtonElement;
    button.click();
    expect(button.disabled).toBe(true);
    button.click();
    button.click();
    await flush();
    expect(mock.answers.filter((a) => a.step === 0).length).toBe(1);
  });

  it("retries a dropped submission with the same step token", async () => {
    const mock = new MockService();
    mock.failNextSubmitWith = "network";
    const { root, clock } = setup(mock);
    await begin(root);
    clock.advance(2_000);
    clickAnswer(root, "left");
    await flush();
    // one effective answer despite the dropped first attempt
    expect(mock.answers.filter((a) => a.step === 0).length).toBe(1);
    expect(root.querySelector(".crt-step")).toBeTruthy();
  });

  it("recovers from a transient 500 the same way", async () => {
    const mock = new MockService();
    mock.failNextSubmitWith = 500;
    const { root, clock } = setup(mock);
    await begin(root);
    clock.advance(2_000);
    clickAnswer(root, "left");
    await flush();
    expect(mock.answers.filter((a) => a.step === 0).length).toBe(1);
  });

  it("shows a terminal message once the session expires", async () => {
    const mock = new MockService();
    const { root } = setup(mock);
    await begin(root);
    mock.expireNow = true;
    clickAnswer(root, "left");
    await flush();
    expect(root.querySelector(".error")).toBeTruthy();
    expect(root.textContent).toContain("Session expired");
    expect(root.querySelector("button[data-answer]")).toBeNull();
  });

  it("requires a nonempty free-text answer", async () => {
    const { root, mock, clock } = setup();
    await begin(root);
    clock.advance(500);
    clickAnswer(root, "left");
    await flush();
    expect(root.querySelector(".crt-step")).toBeTruthy();
    await answerCrt(root, "   ");
    // still on the same screen, nothing submitted for step 1
    expect(root.querySelector(".crt-step")).toBeTruthy();
    expect(mock.answers.filter((a) => a.step === 1).length).toBe(0);
    await answerCrt(root, "a real answer");
    expect(mock.answers.filter((a) => a.step === 1).length).toBe(1);
  });
});
