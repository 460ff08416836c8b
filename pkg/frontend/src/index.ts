export { decodeSnapshot, encodeSnapshot, sliceMagnitude, SNAPSHOT_MAGIC } from "./snapshot.js";
export { parseCsv, parseTrajectory, parseCollapse, parseReport } from "./csv.js";
export { encodePng, decodePng } from "./png.js";
export { Raster, ticks, formatTick, SERIES_COLORS } from "./raster.js";
export { viridis } from "./colormap.js";
export { render, renderOverlay, renderSlice, renderCollapse, renderConvergence } from "./figures.js";
export { main as cliMain, parseArgs } from "./cli.js";
