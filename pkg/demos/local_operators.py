"""
Relational operators on columnar tables
=======================================

Build two small tables by hand, then walk through the six operators:
join, union, intersect, difference, select, project.
"""

from shardtable import (
    DType, Field, JoinConfig, Schema, Table,
    difference_distinct, intersect_distinct, join, project, select,
    union_distinct,
)

# A table is a frozen set of typed columns. None marks a null cell.
people = Table.from_rows(
    Schema([Field("id", DType.Int64), Field("name", DType.Utf8),
            Field("score", DType.Float64)]),
    [
        (1, "ada", 91.5),
        (2, "grace", 88.0),
        (3, "alan", None),
        (4, None, 70.25),
        (2, "grace", 88.0),   # duplicate row, kept as-is
    ],
)

teams = Table.from_rows(
    Schema([Field("person", DType.Int64), Field("team", DType.Utf8)]),
    [
        (1, "red"),
        (1, "blue"),
        (3, "red"),
        (9, "green"),
        (None, "gray"),
    ],
)


def show(title, t):
    print(f"\n{title}  ({t.num_rows} rows)")
    print("  " + " | ".join(f.name for f in t.schema))
    for i in range(t.num_rows):
        print("  " + " | ".join(repr(v) for v in t.row(i)))


show("people", people)
show("teams", teams)

# Inner join on people.id == teams.person. Duplicate keys multiply:
# person 1 is on two teams, so ada appears twice.
show("inner join", join(people, teams, JoinConfig.inner(0, 0)))

# An outer join keeps the unmatched side padded with nulls. The null key
# in teams matches nothing, nulls never compare equal to anything.
show("full outer join", join(people, teams, JoinConfig.full_outer(0, 0)))

# Set operators treat tables as sets of whole rows and always return
# each distinct row once. The duplicate grace row collapses.
show("people UNION people", union_distinct(people, people))
show("people INTERSECT people[0:2]", intersect_distinct(
    people, Table.from_rows(people.schema, [people.row(0), people.row(1)])))
show("people MINUS people[0:2]", difference_distinct(
    people, Table.from_rows(people.schema, [people.row(0), people.row(1)])))

# select takes a predicate string over column names (or #index).
# A comparison with a null cell is false, so alan drops out here.
show("select score >= 80", select(people, "score >= 80"))

# project picks and reorders columns, duplicates allowed.
show("project name, score, name", project(people, [1, 2, 1]))
