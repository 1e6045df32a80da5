"""Distributed data-parallel columnar table engine.

Local relational operators over immutable columnar tables, lifted to
distributed execution by hash partitioning plus a bulk-synchronous
all-to-all shuffle over pluggable transports.
"""

from .table import (
    CANONICAL_NAN_BITS,
    Column,
    DType,
    FNV_OFFSET_BASIS,
    FNV_PRIME,
    Field,
    Schema,
    SchemaMismatchError,
    Table,
    concat,
    encode_row,
    encode_rows,
    gather_padded,
    hash_row,
    hash_rows,
    take_rows,
)
from .predicate import (
    Comparison,
    Predicate,
    PredicateSyntaxError,
    RowPredicate,
    as_predicate,
    parse_predicate,
)
from .ops import (
    JoinAlgorithm,
    JoinConfig,
    JoinType,
    difference_distinct,
    hash_join,
    hash_partition,
    intersect_distinct,
    join,
    merge_sorted,
    project,
    select,
    sort_by_keys,
    sort_join,
    union_distinct,
)
from .frames import FrameError, deserialize_table, serialize_table
from .comm import (
    CommError,
    WorkerContext,
    all_to_all,
    gather,
    init_context,
    init_local_cluster,
    run_local_cluster,
)
from .dist import (
    DistributedTable,
    distributed_difference,
    distributed_intersect,
    distributed_join,
    distributed_project,
    distributed_select,
    distributed_union,
)
from .tableio import (
    CsvError,
    CsvReadOptions,
    generate_table,
    generate_table_slice,
    read_csv,
    read_csv_many,
    write_csv,
)

__version__ = "0.1.0"

__all__ = [
    "CANONICAL_NAN_BITS",
    "Column",
    "CommError",
    "Comparison",
    "CsvError",
    "CsvReadOptions",
    "DType",
    "DistributedTable",
    "FNV_OFFSET_BASIS",
    "FNV_PRIME",
    "Field",
    "FrameError",
    "JoinAlgorithm",
    "JoinConfig",
    "JoinType",
    "Predicate",
    "PredicateSyntaxError",
    "RowPredicate",
    "Schema",
    "SchemaMismatchError",
    "Table",
    "WorkerContext",
    "all_to_all",
    "as_predicate",
    "concat",
    "deserialize_table",
    "difference_distinct",
    "distributed_difference",
    "distributed_intersect",
    "distributed_join",
    "distributed_project",
    "distributed_select",
    "distributed_union",
    "encode_row",
    "encode_rows",
    "gather",
    "gather_padded",
    "generate_table",
    "generate_table_slice",
    "hash_join",
    "hash_partition",
    "hash_row",
    "hash_rows",
    "init_context",
    "init_local_cluster",
    "intersect_distinct",
    "join",
    "merge_sorted",
    "parse_predicate",
    "project",
    "read_csv",
    "read_csv_many",
    "run_local_cluster",
    "select",
    "serialize_table",
    "sort_by_keys",
    "sort_join",
    "take_rows",
    "union_distinct",
    "write_csv",
    "__version__",
]
