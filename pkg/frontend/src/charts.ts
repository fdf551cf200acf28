/** Turns a server chart document into a renderer-agnostic draw model.
 *
 * The server owns what to plot; this module's only liberty is mapping
 * chart kinds to visual idioms (bars, points, slices, table rows).
 */

import type { ChartDocument } from "./types.js";

export type Cell = string | number | boolean | null;

export interface Bar {
  label: string;
  value: number;
  fraction: number; // of the max value, for scaling
}

export interface PiePart {
  label: string;
  value: number;
  share: number; // of the total
}

export interface Point {
  x: number;
  y: number;
}

export type DrawModel =
  | { kind: "bars"; title: string; bars: Bar[] }
  | { kind: "pie"; title: string; parts: PiePart[] }
  | { kind: "line" | "scatter"; title: string; points: Point[] }
  | { kind: "table"; title: string; header: string[]; rows: Cell[][] };

function column(doc: ChartDocument, name: string | undefined): Cell[] {
  if (!name) throw new Error("chart document is missing a required encoding");
  const values = doc.data[name];
  if (!values) throw new Error(`chart document has no column ${name}`);
  return values;
}

function asLabel(cell: Cell): string {
  return cell === null ? "(missing)" : String(cell);
}

function asNumber(cell: Cell): number {
  if (typeof cell === "number") return cell;
  const parsed = Number(cell);
  return Number.isFinite(parsed) ? parsed : 0;
}

export function tableModel(doc: ChartDocument): DrawModel {
  const header = doc.columns.map((c) => c.name);
  const length = Math.max(0, ...header.map((h) => doc.data[h]?.length ?? 0));
  const rows: Cell[][] = [];
  for (let i = 0; i < length; i++) {
    rows.push(header.map((h) => doc.data[h]?.[i] ?? null));
  }
  return { kind: "table", title: doc.title, header, rows };
}

export function buildDrawModel(doc: ChartDocument): DrawModel {
  switch (doc.kind) {
    case "bar":
    case "stacked-bar": {
      const labels = column(doc, doc.x?.column).map(asLabel);
      const values = column(doc, doc.y?.column).map(asNumber);
      const max = Math.max(1e-9, ...values.map(Math.abs));
      return {
        kind: "bars",
        title: doc.title,
        bars: labels.map((label, i) => ({
          label,
          value: values[i] ?? 0,
          fraction: Math.abs(values[i] ?? 0) / max,
        })),
      };
    }
    case "pie": {
      const labels = column(doc, doc.x?.column).map(asLabel);
      const values = column(doc, doc.y?.column).map(asNumber);
      const total = values.reduce((a, b) => a + b, 0);
      return {
        kind: "pie",
        title: doc.title,
        parts: labels.map((label, i) => ({
          label,
          value: values[i] ?? 0,
          share: total > 0 ? (values[i] ?? 0) / total : 0,
        })),
      };
    }
    case "line":
    case "scatter": {
      const xs = column(doc, doc.x?.column).map(asNumber);
      const ys = column(doc, doc.y?.column).map(asNumber);
      return {
        kind: doc.kind,
        title: doc.title,
        points: xs.map((x, i) => ({ x, y: ys[i] ?? 0 })),
      };
    }
    default:
      return tableModel(doc);
  }
}
