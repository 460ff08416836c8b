/** Readers for the run-directory CSV formats. */

export interface Table {
  columns: string[];
  rows: number[][];
}

export function parseCsv(text: string, name = "<csv>"): Table {
  const lines = text
    .split(/\r?\n/)
    .map((l) => l.trim())
    .filter((l) => l.length > 0);
  if (lines.length < 2) throw new Error(`${name}: empty or header-only CSV`);
  const columns = lines[0].split(",");
  const rows = lines.slice(1).map((line, i) => {
    const parts = line.split(",");
    if (parts.length !== columns.length) {
      throw new Error(`${name}: row ${i + 2} has ${parts.length} fields, want ${columns.length}`);
    }
    const nums = parts.map(Number);
    if (nums.some((x) => Number.isNaN(x))) {
      throw new Error(`${name}: row ${i + 2} has a non-numeric field`);
    }
    return nums;
  });
  return { columns, rows };
}

export function column(table: Table, name: string, file = "<csv>"): number[] {
  const idx = table.columns.indexOf(name);
  if (idx < 0) throw new Error(`${file}: missing column ${name}`);
  return table.rows.map((r) => r[idx]);
}

export interface Trajectory {
  t: number[];
  q: [number[], number[], number[]];
  u: [number[], number[], number[]];
  absPsi: number[];
}

export function parseTrajectory(text: string, name = "trajectory.csv"): Trajectory {
  const tab = parseCsv(text, name);
  const want = ["t", "qx", "qy", "qz", "ux", "uy", "uz", "abs_psi_at_p"];
  if (tab.columns.join(",") !== want.join(",")) {
    throw new Error(`${name}: unexpected columns ${tab.columns.join(",")}`);
  }
  return {
    t: column(tab, "t", name),
    q: [column(tab, "qx", name), column(tab, "qy", name), column(tab, "qz", name)],
    u: [column(tab, "ux", name), column(tab, "uy", name), column(tab, "uz", name)],
    absPsi: column(tab, "abs_psi_at_p", name),
  };
}

export interface CollapseSeries {
  t: number[];
  norms: number[][]; // per cell
  energies: number[][];
}

export function parseCollapse(text: string, name = "collapse.csv"): CollapseSeries {
  const tab = parseCsv(text, name);
  const normCols = tab.columns.filter((c) => c.startsWith("norm_cell_"));
  const energyCols = tab.columns.filter((c) => c.startsWith("energy_cell_"));
  if (tab.columns[0] !== "t" || normCols.length === 0) {
    throw new Error(`${name}: not a collapse CSV`);
  }
  return {
    t: column(tab, "t", name),
    norms: normCols.map((c) => column(tab, c, name)),
    energies: energyCols.map((c) => column(tab, c, name)),
  };
}

export interface ConvergenceReport {
  c: number[];
  U: number[];
  supDev: number[];
  l2Dev: number[];
  fieldDev: number[];
  fittedOrder: number;
}

export function parseReport(text: string, name = "report.csv"): ConvergenceReport {
  const tab = parseCsv(text, name);
  const order = column(tab, "fitted_order", name);
  return {
    c: column(tab, "c", name),
    U: column(tab, "U", name),
    supDev: column(tab, "sup_dev", name),
    l2Dev: column(tab, "l2_dev", name),
    fieldDev: column(tab, "field_dev", name),
    fittedOrder: order[0],
  };
}
