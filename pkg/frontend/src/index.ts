export { Bridge, BridgeError, type BridgeStats, type Response } from "./bridge";
export {
  BoundTable,
  ShardClient,
  type CellValue,
  type ColumnData,
  type CsvOptions,
  type DTypeName,
  type FieldMeta,
  type JoinOptions,
  type JoinTypeName,
  type ServerStats,
} from "./client";
export { overheadBench, runCli, type OverheadReport } from "./overhead";
