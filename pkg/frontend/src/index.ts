export * from "./types.js";
export * from "./api.js";
export * from "./charts.js";
export * from "./history.js";
export * from "./viewState.js";
