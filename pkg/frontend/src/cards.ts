/** Policy card rendering: the number, the pie, and the two bar charts. */

import { PolicyCard } from "./api.js";
import { barChart, pieChart } from "./charts.js";

export const AGE_LABELS = ["18-29", "30-39", "40-49", "50-59", "60-69", "70+"];

function section(title: string, content: Node): HTMLElement {
  const wrap = document.createElement("div");
  wrap.className = "card-section";
  const heading = document.createElement("h4");
  heading.textContent = title;
  wrap.appendChild(heading);
  wrap.appendChild(content);
  return wrap;
}

export function renderPolicyCard(card: PolicyCard): HTMLElement {
  const root = document.createElement("div");
  root.className = "policy-card";
  root.dataset.policy = String(card.policy);

  const title = document.createElement("h3");
  title.textContent = card.label;
  root.appendChild(title);

  const lifeYears = document.createElement("div");
  lifeYears.className = "life-years";
  lifeYears.textContent = Math.round(card.life_years_saved).toLocaleString("en-US");
  root.appendChild(section("Life Years Saved", lifeYears));

  root.appendChild(
    section(
      "Proportion of Patients that Survive",
      pieChart(card.overall_survival),
    ),
  );
  root.appendChild(
    section(
      "Proportion of Patients that Receive Critical Care by Age Group",
      barChart(card.access_by_age, AGE_LABELS),
    ),
  );
  root.appendChild(
    section(
      "Proportion of Patients that Survive by Age Group",
      barChart(card.survival_by_age, AGE_LABELS),
    ),
  );
  return root;
}
