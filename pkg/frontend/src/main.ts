import { SurveyClient } from "./api.js";
import { QuestionnaireApp } from "./app.js";

declare global {
  interface Window {
    SERVICE_BASE_URL?: string;
  }
}

const base = window.SERVICE_BASE_URL ?? "";
const mount = document.getElementById("app");
if (!mount) {
  throw new Error("missing #app mount point");
}
new QuestionnaireApp(mount, new SurveyClient(base)).start();
