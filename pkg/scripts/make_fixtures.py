"""Regenerate the bundled corpora, suites, and drift profiles.

Run from the repo root with the package installed:

    python scripts/make_fixtures.py

Deterministic: reruns produce byte-identical files. The script self-checks
that every corruption rule round-trips through the categorizer on every
applicable case, and that the bundled profiles reproduce the published
pass rates before anything is written.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

from pmig import data
from pmig.drift import FailureCategory, applicable, corrupt
from pmig.fragments import FilterPredicate, OperatorFragment, OrderKey, SchemaContext, canonicalize
from pmig.grammar import ParseError, parse_output
from pmig.prompts import load_registry
from pmig.providers import MockProvider, load_profile
from pmig.runner import ScriptedFixer, categorize, migrate, run_suite
from pmig.testbed import CorpusEntry, Suite, TestCase, generate_testbed, save_corpus, save_suite

DATA = Path(data.__file__).resolve().parent

TABLES = {
    "demographics": ["Gender", "Ethnicity", "SSN", "Registration_Date", "Birth_City", "Marital_Status"],
    "visits": ["Visit_Date", "Patient_Name", "Detailed_Remarks", "Clinic_City", "Followup_Count"],
    "employees": ["Employee_Name", "Department", "TIMES_LATE", "Tasks_Completed", "Hire_Date", "Office_City"],
    "orders": ["City", "Lineitem_Count", "Order_Date", "Ship_Mode", "Total_Price"],
    "accounts": ["Account_Status", "Delinquency_Score", "Region", "Last_Review_Date", "Owner_Name"],
}

CITIES = ["New_York", "Los_Angeles", "San_Diego", "Las_Vegas", "Fort_Worth", "San_Jose"]
PLAIN_CITIES = ["Austin", "Dallas", "Boston", "Denver", "Seattle", "Chicago"]
NAMES = ["John_Smith", "Mary_Jones", "Ana_Lopez", "Wei_Chen", "Omar_Khan", "Lena_Vogel"]
YEARS = ["2009", "2011", "2015", "2018", "2021", "2017"]
DATES = ["2003-12", "2018-01-05", "2009-08-28", "2017-06-30", "2019-03-01", "2015-08-15"]
NUMBERS = ["3", "5", "10", "25", "100", "7"]
ETHNICITIES = ["Spaniard", "Italian", "German", "Japanese"]
STATUSES = ["Active", "Closed", "Frozen"]
SHIP_MODES = ["Standard", "Express", "Overnight"]
DEPARTMENTS = ["Sales", "Engineering", "Finance", "Support"]
MARITAL = ["Single", "Married", "Divorced"]
REMARKS = ["no issue", "required merchant", "follow up needed", "pending review"]
REGIONS = ["North_Zone", "South_Zone", "East_Wing", "West_Wing"]


def schema(table: str) -> SchemaContext:
    return SchemaContext(table, frozenset(TABLES[table]))


def frag(filters=(), group_by=(), order_by=(), limit=None, select=()) -> OperatorFragment:
    return canonicalize(
        OperatorFragment(
            filters=tuple(FilterPredicate(c, o, v) for c, o, v in filters),
            group_by=tuple(group_by),
            order_by=tuple(OrderKey(c, d) for c, d in order_by),
            limit=limit,
            select=tuple(select),
        )
    )


def entry(
    eid: str,
    question: str,
    table: str,
    fragment: OperatorFragment,
    *,
    source: str = "production",
    previously_failed: bool = False,
    variation_of: str | None = None,
    implicit=(),
    word_substituted: bool = False,
    natural_phrasing: bool = False,
    aggregate: bool = False,
) -> CorpusEntry:
    ops = set()
    if fragment.filters:
        ops.add("Filter")
    if fragment.group_by:
        ops.add("GroupBy")
    if fragment.order_by:
        ops.add("OrderBy")
    if fragment.limit is not None:
        ops.add("Limit")
    if fragment.select:
        ops.add("Select")
    if aggregate:
        ops.add("Aggregate")
    for column in fragment.columns():
        assert column in TABLES[table], f"{eid}: column {column} not in table {table}"
    return CorpusEntry(
        id=eid,
        question=question,
        schema=schema(table),
        expected=fragment,
        operators_present=frozenset(ops),
        source=source,
        previously_failed=previously_failed,
        variation_of=variation_of,
        implicit_markers=frozenset(implicit),
        word_substituted=word_substituted,
        natural_phrasing=natural_phrasing,
    )


def build_corpus() -> list[CorpusEntry]:
    entries: list[CorpusEntry] = []
    counter = iter(range(1, 1000))

    def cid() -> str:
        return f"C{next(counter):03d}"

    # --- 20 entries with all four of Filter/GroupBy/OrderBy/Limit ---------
    entries.append(
        entry(cid(), "Show top 3 city by lineitem count before Dec 2003", "orders",
              frag(filters=[("Order_Date", "<", "2003-12")], group_by=["City"],
                   order_by=[("Lineitem_Count", "DESC")], limit=3, select=["City"]),
              aggregate=True)
    )
    for r in range(4):
        n = NUMBERS[r]
        if r % 2 == 0:
            entries.append(
                entry(cid(), f"Show top {n} ship modes by total price in {CITIES[r].replace('_', ' ')}",
                      "orders",
                      frag(filters=[("City", "=", CITIES[r])], group_by=["Ship_Mode"],
                           order_by=[("Total_Price", "DESC")], limit=int(n), select=["Ship_Mode"]),
                      aggregate=True)
            )
        else:
            entries.append(
                entry(cid(), f"Show top {n} cities by lineitem count before {DATES[r]}", "orders",
                      frag(filters=[("Order_Date", "<", DATES[r])], group_by=["City"],
                           order_by=[("Lineitem_Count", "DESC")], limit=int(n), select=["City"]),
                      aggregate=True)
            )
    for r in range(5):
        n = NUMBERS[(r + 1) % 6]
        entries.append(
            entry(cid(), f"Show top {n} departments by tasks completed hired after {YEARS[r]}",
                  "employees",
                  frag(filters=[("Hire_Date", ">", YEARS[r])], group_by=["Department"],
                       order_by=[("Tasks_Completed", "DESC")], limit=int(n), select=["Department"]),
                  aggregate=True)
        )
    for r in range(5):
        n = NUMBERS[(r + 2) % 6]
        entries.append(
            entry(cid(), f"Show top {n} regions by delinquency score for {STATUSES[r % 3].lower()} accounts",
                  "accounts",
                  frag(filters=[("Account_Status", "=", STATUSES[r % 3])], group_by=["Region"],
                       order_by=[("Delinquency_Score", "DESC")], limit=int(n), select=["Region"]),
                  aggregate=True)
        )
    for r in range(5):
        n = NUMBERS[(r + 3) % 6]
        entries.append(
            entry(cid(), f"Show top {n} clinic cities by followup count before {DATES[(r + 1) % 6]}",
                  "visits",
                  frag(filters=[("Visit_Date", "<", DATES[(r + 1) % 6])], group_by=["Clinic_City"],
                       order_by=[("Followup_Count", "DESC")], limit=int(n), select=["Clinic_City"]),
                  aggregate=True)
        )
    assert len(entries) == 20

    # --- 26 entries with exactly two of the four operators ----------------
    for r in range(4):  # Filter + OrderBy
        entries.append(
            entry(cid(), f"List patient names where clinic city is {CITIES[r].replace('_', ' ')} sorted by visit date",
                  "visits",
                  frag(filters=[("Clinic_City", "=", CITIES[r])],
                       order_by=[("Visit_Date", "ASC")], select=["Patient_Name"]))
        )
    for r in range(4):  # Filter + OrderBy
        entries.append(
            entry(cid(), f"List names for {ETHNICITIES[r]} residents sorted by registration date",
                  "demographics",
                  frag(filters=[("Ethnicity", "=", ETHNICITIES[r])],
                       order_by=[("Registration_Date", "ASC")], select=["Birth_City"]))
        )
    for r in range(6):  # Filter + GroupBy
        entries.append(
            entry(cid(), f"Count employees per office city with more than {NUMBERS[r]} tasks completed",
                  "employees",
                  frag(filters=[("Tasks_Completed", ">", NUMBERS[r])], group_by=["Office_City"],
                       select=["Office_City"]),
                  aggregate=True)
        )
    for r in range(6):  # Filter + Limit
        entries.append(
            entry(cid(), f"Show first {NUMBERS[r]} orders shipped {SHIP_MODES[r % 3].lower()} class",
                  "orders",
                  frag(filters=[("Ship_Mode", "=", SHIP_MODES[r % 3])], limit=int(NUMBERS[r]),
                       select=["City", "Total_Price"]))
        )
    for r in range(3):  # GroupBy + OrderBy
        entries.append(
            entry(cid(), f"Count accounts per region ordered by region, round {r + 1}", "accounts",
                  frag(group_by=["Region"], order_by=[("Region", "ASC")], select=["Region"]),
                  aggregate=True)
        )
    for r in range(3):  # OrderBy + Limit
        entries.append(
            entry(cid(), f"Show the {NUMBERS[r]} most recent reviews by last review date", "accounts",
                  frag(order_by=[("Last_Review_Date", "DESC")], limit=int(NUMBERS[r]),
                       select=["Owner_Name", "Last_Review_Date"]))
        )
    assert len(entries) == 46

    # --- 14 entries with exactly one of the four operators ----------------
    entries.append(
        entry(cid(), "List the demographics details for males after 2009.", "demographics",
              frag(filters=[("Gender", "=", "Male"), ("Registration_Date", ">", "2009")]))
    )
    entries.append(
        entry(cid(), "List demographics details for Spaniards between Jan 05, 2018 and Aug 28, 2009.",
              "demographics",
              frag(filters=[("Ethnicity", "=", "Spaniard"), ("Registration_Date", ">=", "2018-01-05"),
                            ("Registration_Date", "<=", "2009-08-28")]))
    )
    entries.append(
        entry(cid(), "List demographics details for SSN not in 157549937 and 155485548 between 2018 and 2009",
              "demographics",
              frag(filters=[("SSN", "!=", "157549937"), ("SSN", "!=", "155485548"),
                            ("Registration_Date", ">=", "2018"), ("Registration_Date", "<=", "2009")]))
    )
    entries.append(
        entry(cid(), "Show employee names in the Sales department.", "employees",
              frag(filters=[("Department", "=", "Sales")], select=["Employee_Name"]))
    )
    for r in range(4):  # Filter only
        entries.append(
            entry(cid(), f"Show orders from {PLAIN_CITIES[r]} with total price over {NUMBERS[r]}",
                  "orders",
                  frag(filters=[("City", "=", PLAIN_CITIES[r]), ("Total_Price", ">", NUMBERS[r])],
                       select=["City", "Total_Price"]))
        )
    for r in range(2):  # GroupBy only
        entries.append(
            entry(cid(), f"Count demographics rows per marital status, round {r + 1}", "demographics",
                  frag(group_by=["Marital_Status"], select=["Marital_Status"]), aggregate=True)
        )
    for r in range(2):  # OrderBy only
        entries.append(
            entry(cid(), f"List all employees sorted by {'hire date' if r == 0 else 'employee name'}",
                  "employees",
                  frag(order_by=[("Hire_Date" if r == 0 else "Employee_Name", "ASC")],
                       select=["Employee_Name"]))
        )
    for r in range(2):  # Limit only
        entries.append(
            entry(cid(), f"Show any {NUMBERS[r]} visit rows", "visits",
                  frag(limit=int(NUMBERS[r]), select=["Patient_Name"]))
        )
    assert len(entries) == 60

    # --- 15 variations of the first class-four entries (moderate pool) ----
    for r in range(15):
        parent = entries[r]
        no_limit = canonicalize(
            OperatorFragment(
                filters=parent.expected.filters,
                group_by=parent.expected.group_by,
                order_by=parent.expected.order_by,
                limit=None,
                select=parent.expected.select,
            )
        )
        entries.append(
            entry(cid(), f"Rank without a cutoff: {parent.question}", parent.schema.table, no_limit,
                  variation_of=parent.id, aggregate="Aggregate" in parent.operators_present)
        )
    assert len(entries) == 75

    # --- 12 previously-failed entries (moderate pool) ----------------------
    for r in range(6):  # Filter + OrderBy + Limit
        entries.append(
            entry(cid(), f"Show the {NUMBERS[r]} latest {STATUSES[r % 3].lower()} accounts by last review date",
                  "accounts",
                  frag(filters=[("Account_Status", "=", STATUSES[r % 3])],
                       order_by=[("Last_Review_Date", "DESC")], limit=int(NUMBERS[r]),
                       select=["Owner_Name"]),
                  previously_failed=True)
        )
    for r in range(6):  # Filter + GroupBy + Limit
        entries.append(
            entry(cid(), f"Count visits per clinic city before {DATES[r]} capped at {NUMBERS[r]} rows",
                  "visits",
                  frag(filters=[("Visit_Date", "<", DATES[r])], group_by=["Clinic_City"],
                       limit=int(NUMBERS[r]), select=["Clinic_City"]),
                  previously_failed=True, aggregate=True)
        )
    assert len(entries) == 87

    # --- 12 query-cache / unit-test samples (moderate pool) ----------------
    entries.append(
        entry(cid(), 'Show me visit details where there are "no issue" in detailed remarks', "visits",
              frag(filters=[("Detailed_Remarks", "=", "no issue")],
                   select=["Patient_Name", "Visit_Date"]),
              source="query_cache")
    )
    for r in range(5):
        entries.append(
            entry(cid(), f"Cached lookup {r + 1}: orders from {PLAIN_CITIES[r]} grouped by ship mode ordered by total price",
                  "orders",
                  frag(filters=[("City", "=", PLAIN_CITIES[r])], group_by=["Ship_Mode"],
                       order_by=[("Total_Price", "DESC")], select=["Ship_Mode"]),
                  source="query_cache", aggregate=True)
        )
    for r in range(3):
        entries.append(
            entry(cid(), f"Unit test {r + 1}: employees named {NAMES[r].replace('_', ' ')}", "employees",
                  frag(filters=[("Employee_Name", "=", NAMES[r])], select=["Employee_Name"]),
                  source="unit_test")
        )
    for r in range(3):
        entries.append(
            entry(cid(), f"Unit test {r + 4}: list the whole {list(TABLES)[r]} table", list(TABLES)[r],
                  frag(), source="unit_test")
        )
    assert len(entries) == 99

    # --- 20 entries with implicit operations (hard pool) -------------------
    entries.append(
        entry(cid(), "List visits which required merchant as per detailed remarks", "visits",
              frag(filters=[("Detailed_Remarks", "=", "required merchant")],
                   select=["Patient_Name", "Visit_Date"]),
              implicit=("implicit_column", "implicit_filter"))
    )
    entries.append(
        entry(cid(), "List employees having more than 5 tasks over last two months", "employees",
              frag(filters=[("Tasks_Completed", ">", "5"), ("Hire_Date", ">", "2025-06")],
                   select=["Employee_Name"]),
              implicit=("implicit_filter", "implicit_ordering"))
    )
    for r in range(6):
        entries.append(
            entry(cid(), f"Analyze delinquency for {REGIONS[r % 4].replace('_', ' ').lower()} accounts, wave {r + 1}",
                  "accounts",
                  frag(filters=[("Region", "=", REGIONS[r % 4]), ("Delinquency_Score", ">", NUMBERS[r])],
                       select=["Owner_Name", "Delinquency_Score"]),
                  implicit=("implicit_column",))
        )
    for r in range(6):  # implicit ordering: Filter + OrderBy + Limit
        entries.append(
            entry(cid(), f"Who are the {NUMBERS[r]} most recently hired in {DEPARTMENTS[r % 4]}?",
                  "employees",
                  frag(filters=[("Department", "=", DEPARTMENTS[r % 4])],
                       order_by=[("Hire_Date", "DESC")], limit=int(NUMBERS[r]),
                       select=["Employee_Name"]),
                  implicit=("implicit_filter", "implicit_ordering"))
        )
    for r in range(6):  # implicit aggregation: Filter + GroupBy + OrderBy
        entries.append(
            entry(cid(), f"Trends of registrations per birth city for {MARITAL[r % 3].lower()} residents",
                  "demographics",
                  frag(filters=[("Marital_Status", "=", MARITAL[r % 3])], group_by=["Birth_City"],
                       order_by=[("Registration_Date", "ASC")], select=["Birth_City"]),
                  implicit=("implicit_aggregation",), aggregate=True)
        )
    assert len(entries) == 119

    # --- 10 word-substituted entries (hard pool) ----------------------------
    for r in range(10):
        entries.append(
            entry(cid(), f"Show staffers stationed in {PLAIN_CITIES[r % 6]} office, take {r + 1}",
                  "employees",
                  frag(filters=[("Office_City", "=", PLAIN_CITIES[r % 6])], select=["Employee_Name"]),
                  word_substituted=True)
        )
    assert len(entries) == 129

    # --- 8 naturally phrased entries (hard pool) ----------------------------
    for r in range(8):
        entries.append(
            entry(cid(), f"Could you pull up whoever registered after {YEARS[r % 6]}, please?",
                  "demographics",
                  frag(filters=[("Registration_Date", ">", YEARS[r % 6])], select=["Birth_City"]),
                  natural_phrasing=True)
        )
    assert len(entries) == 137

    # --- 163 filler entries: three operators or none, never tier-selected --
    tables = list(TABLES)
    for r in range(163):
        table = tables[r % 5]
        shape = r % 4
        if shape == 0:  # Filter + GroupBy + OrderBy
            fragment = {
                "demographics": frag(filters=[("Gender", "=", "Female" if r % 2 else "Male")],
                                     group_by=["Ethnicity"], order_by=[("Registration_Date", "ASC")],
                                     select=["Ethnicity"]),
                "visits": frag(filters=[("Followup_Count", ">", NUMBERS[r % 6])],
                               group_by=["Clinic_City"], order_by=[("Visit_Date", "ASC")],
                               select=["Clinic_City"]),
                "employees": frag(filters=[("TIMES_LATE", ">", NUMBERS[r % 6])],
                                  group_by=["Department"], order_by=[("Employee_Name", "ASC")],
                                  select=["Department"]),
                "orders": frag(filters=[("Ship_Mode", "=", SHIP_MODES[r % 3])],
                               group_by=["City"], order_by=[("Order_Date", "ASC")], select=["City"]),
                "accounts": frag(filters=[("Account_Status", "=", STATUSES[r % 3])],
                                 group_by=["Region"], order_by=[("Delinquency_Score", "DESC")],
                                 select=["Region"]),
            }[table]
            question = f"Workload sample {r + 1}: breakdown in {table} with ordering"
        elif shape == 1:  # Filter + OrderBy + Limit
            fragment = {
                "demographics": frag(filters=[("Marital_Status", "=", MARITAL[r % 3])],
                                     order_by=[("Registration_Date", "DESC")],
                                     limit=int(NUMBERS[r % 6]), select=["Birth_City"]),
                "visits": frag(filters=[("Detailed_Remarks", "=", REMARKS[r % 4])],
                               order_by=[("Visit_Date", "DESC")], limit=int(NUMBERS[r % 6]),
                               select=["Patient_Name"]),
                "employees": frag(filters=[("Department", "=", DEPARTMENTS[r % 4])],
                                  order_by=[("Tasks_Completed", "DESC")], limit=int(NUMBERS[r % 6]),
                                  select=["Employee_Name"]),
                "orders": frag(filters=[("City", "=", CITIES[r % 6])],
                               order_by=[("Total_Price", "DESC")], limit=int(NUMBERS[r % 6]),
                               select=["City"]),
                "accounts": frag(filters=[("Region", "=", REGIONS[r % 4])],
                                 order_by=[("Last_Review_Date", "DESC")], limit=int(NUMBERS[r % 6]),
                                 select=["Owner_Name"]),
            }[table]
            question = f"Workload sample {r + 1}: top rows in {table}"
        elif shape == 2:  # Filter + GroupBy + Limit
            fragment = {
                "demographics": frag(filters=[("Ethnicity", "=", ETHNICITIES[r % 4])],
                                     group_by=["Birth_City"], limit=int(NUMBERS[r % 6]),
                                     select=["Birth_City"]),
                "visits": frag(filters=[("Visit_Date", ">", YEARS[r % 6])],
                               group_by=["Detailed_Remarks"], limit=int(NUMBERS[r % 6]),
                               select=["Detailed_Remarks"]),
                "employees": frag(filters=[("Hire_Date", ">", YEARS[r % 6])],
                                  group_by=["Office_City"], limit=int(NUMBERS[r % 6]),
                                  select=["Office_City"]),
                "orders": frag(filters=[("Order_Date", ">", YEARS[r % 6])],
                               group_by=["Ship_Mode"], limit=int(NUMBERS[r % 6]),
                               select=["Ship_Mode"]),
                "accounts": frag(filters=[("Delinquency_Score", ">", NUMBERS[r % 6])],
                                 group_by=["Account_Status"], limit=int(NUMBERS[r % 6]),
                                 select=["Account_Status"]),
            }[table]
            question = f"Workload sample {r + 1}: grouped counts in {table}"
        else:  # GroupBy + OrderBy + Limit
            group_col = {"demographics": "Marital_Status", "visits": "Clinic_City",
                         "employees": "Department", "orders": "City", "accounts": "Region"}[table]
            fragment = frag(group_by=[group_col], order_by=[(group_col, "ASC")],
                            limit=int(NUMBERS[r % 6]), select=[group_col])
            question = f"Workload sample {r + 1}: leading groups in {table}"
        entries.append(entry(cid(), question, table, fragment,
                             aggregate=shape in (0, 2, 3) and bool(fragment.group_by)))
    assert len(entries) == 300
    return entries


def build_regression() -> Suite:
    cases: list[TestCase] = []
    counter = iter(range(1, 1000))

    def make(question: str, table: str, fragment: OperatorFragment) -> None:
        four = sum(
            1
            for present in (
                fragment.filters,
                fragment.group_by,
                fragment.order_by,
            )
            if present
        ) + (1 if fragment.limit is not None else 0)
        tier = "hard" if four >= 3 else ("moderate" if four == 2 else "easy")
        rid = f"R{next(counter):03d}"
        cases.append(
            TestCase(id=rid, tier=tier, question=question, schema=schema(table),
                     expected=canonicalize(fragment), source_entry=rid)
        )

    # Anchors for the annotated failure modes.
    make("Monthly order volume per city since 2011, best cities first, top 5", "orders",
         frag(filters=[("Order_Date", ">", "2011")], group_by=["City"],
              order_by=[("Lineitem_Count", "DESC")], limit=5, select=["City"]))
    make("How often is the Sales team late?", "employees",
         frag(filters=[("Department", "=", "Sales"), ("TIMES_LATE", ">", "3")],
              select=["TIMES_LATE"]))
    make("List women registered after 2011", "demographics",
         frag(filters=[("Gender", "=", "Female"), ("Registration_Date", ">", "2011")],
              select=["Birth_City"]))
    make("Visits with pending review remarks", "visits",
         frag(filters=[("Detailed_Remarks", "=", "pending review")], select=["Patient_Name"]))

    # Bulk of the current workload, cycling shapes and values.
    tables = list(TABLES)
    for r in range(146):
        table = tables[r % 5]
        shape = r % 6
        if shape == 0:
            filter_col = {"demographics": ("Gender", "Male"), "visits": ("Detailed_Remarks", REMARKS[r % 4]),
                          "employees": ("Department", DEPARTMENTS[r % 4]), "orders": ("Ship_Mode", SHIP_MODES[r % 3]),
                          "accounts": ("Account_Status", STATUSES[r % 3])}[table]
            group_col = {"demographics": "Ethnicity", "visits": "Clinic_City", "employees": "Office_City",
                         "orders": "City", "accounts": "Region"}[table]
            order_col = {"demographics": "Registration_Date", "visits": "Visit_Date", "employees": "Hire_Date",
                         "orders": "Order_Date", "accounts": "Last_Review_Date"}[table]
            make(f"Workload {r + 1}: {table} breakdown per {group_col.lower()} over time, top {NUMBERS[r % 6]}",
                 table,
                 frag(filters=[(filter_col[0], "=", filter_col[1])], group_by=[group_col],
                      order_by=[(order_col, "ASC")], limit=int(NUMBERS[r % 6]), select=[group_col]))
        elif shape == 1:
            make(f"Workload {r + 1}: recent {table} rows", table,
                 {"demographics": frag(filters=[("Registration_Date", ">", YEARS[r % 6])],
                                       order_by=[("Registration_Date", "ASC")], select=["Birth_City"]),
                  "visits": frag(filters=[("Visit_Date", ">", YEARS[r % 6])],
                                 order_by=[("Visit_Date", "ASC")], select=["Patient_Name"]),
                  "employees": frag(filters=[("Hire_Date", ">", YEARS[r % 6])],
                                    order_by=[("Hire_Date", "ASC")], select=["Employee_Name"]),
                  "orders": frag(filters=[("Order_Date", ">", YEARS[r % 6])],
                                 order_by=[("Order_Date", "ASC")], select=["City"]),
                  "accounts": frag(filters=[("Last_Review_Date", ">", YEARS[r % 6])],
                                   order_by=[("Last_Review_Date", "ASC")], select=["Owner_Name"])}[table])
        elif shape == 2:
            make(f"Workload {r + 1}: {table} counts per category", table,
                 {"demographics": frag(filters=[("Marital_Status", "=", MARITAL[r % 3])],
                                       group_by=["Birth_City"], select=["Birth_City"]),
                  "visits": frag(filters=[("Followup_Count", ">", NUMBERS[r % 6])],
                                 group_by=["Clinic_City"], select=["Clinic_City"]),
                  "employees": frag(filters=[("Tasks_Completed", ">", NUMBERS[r % 6])],
                                    group_by=["Department"], select=["Department"]),
                  "orders": frag(filters=[("Total_Price", ">", NUMBERS[r % 6])],
                                 group_by=["Ship_Mode"], select=["Ship_Mode"]),
                  "accounts": frag(filters=[("Delinquency_Score", ">", NUMBERS[r % 6])],
                                   group_by=["Region"], select=["Region"])}[table])
        elif shape == 3:
            value_bank = {"demographics": CITIES, "visits": CITIES, "employees": NAMES,
                          "orders": CITIES, "accounts": REGIONS}[table]
            column = {"demographics": "Birth_City", "visits": "Clinic_City", "employees": "Employee_Name",
                      "orders": "City", "accounts": "Region"}[table]
            select_col = {"demographics": "Gender", "visits": "Patient_Name", "employees": "Department",
                          "orders": "Ship_Mode", "accounts": "Owner_Name"}[table]
            make(f"Workload {r + 1}: {table} rows matching one location or owner", table,
                 frag(filters=[(column, "=", value_bank[r % len(value_bank)])], select=[select_col]))
        elif shape == 4:
            order_col = {"demographics": "Registration_Date", "visits": "Followup_Count",
                         "employees": "Tasks_Completed", "orders": "Total_Price",
                         "accounts": "Delinquency_Score"}[table]
            select_col = {"demographics": "Birth_City", "visits": "Patient_Name",
                          "employees": "Employee_Name", "orders": "City", "accounts": "Owner_Name"}[table]
            make(f"Workload {r + 1}: largest {table} rows", table,
                 frag(order_by=[(order_col, "DESC")], limit=int(NUMBERS[r % 6]), select=[select_col]))
        else:
            make(f"Workload {r + 1}: everything in {table}", table, frag())

    ordered = {"easy": [], "moderate": [], "hard": []}
    for case in cases:
        ordered[case.tier].append(case)
    flat = tuple(ordered["easy"] + ordered["moderate"] + ordered["hard"])
    return Suite(name="tursio-regression", cases=flat, generation_seed=0)


def check_closure(cases) -> dict[FailureCategory, int]:
    """Every corruption must be categorized back to its own mode."""
    counts = {mode: 0 for mode in FailureCategory}
    for case in cases:
        for mode in FailureCategory:
            if not applicable(mode, case.expected):
                continue
            corrupted = corrupt(mode, case.expected)
            try:
                actual = parse_output(corrupted)
            except ParseError as exc:
                actual = exc
            got = categorize(case.expected, actual, case.schema)
            assert got is mode, f"{case.id}: corrupted by {mode.value} categorized as {got.value}"
            counts[mode] += 1
    return counts


STRICT_MODES = [
    FailureCategory.MISSING_ORDERING,
    FailureCategory.MISSING_GROUPING,
    FailureCategory.NONEXISTENT_COLUMN,
    FailureCategory.SEMANTIC_MISINTERPRETATION,
    FailureCategory.MISSING_IMPLICIT_FILTER,
    FailureCategory.COLUMN_VALUE_CONFUSION,
    FailureCategory.COLUMN_SIMPLIFICATION,
]
CREATIVE_ONLY_MODES = [
    FailureCategory.FORMAT_VIOLATION,
    FailureCategory.INFO_MESSAGE_LEAK,
    FailureCategory.REDUNDANT_OPERATION,
    FailureCategory.OPERATOR_COLUMN_FUSION,
]

STRICT_REQUIRED = [
    "has_formatting_rules",
    "has_underscore_rule",
    "has_implicit_inference_rule",
    "has_reasoning_section",
    "has_final_step_by_step",
    "example_count>=3",
]
CREATIVE_REQUIRED = STRICT_REQUIRED + [
    "has_explicit_output_format",
    "has_no_quote_rule",
    "has_empty_list_rule",
]


def pick_annotations(testbed: Suite) -> tuple[dict[str, str], dict[str, str]]:
    claimed: set[str] = set()

    def claim(mode: FailureCategory, count: int) -> dict[str, str]:
        chosen = {}
        for case in testbed.cases:
            if len(chosen) == count:
                break
            if case.id in claimed or not applicable(mode, case.expected):
                continue
            claimed.add(case.id)
            chosen[case.id] = mode.value
        assert len(chosen) == count, f"not enough applicable testbed cases for {mode.value}"
        return chosen

    strict: dict[str, str] = {}
    for mode in STRICT_MODES:
        strict.update(claim(mode, 2))
    creative = dict(strict)
    for mode in CREATIVE_ONLY_MODES:
        creative.update(claim(mode, 2))
    return strict, creative


def write_profiles(strict_testbed: dict[str, str], creative_testbed: dict[str, str]) -> None:
    strict_regression = {
        "R001": FailureCategory.MISSING_ORDERING.value,
        "R002": FailureCategory.COLUMN_SIMPLIFICATION.value,
        "R003": FailureCategory.MISSING_IMPLICIT_FILTER.value,
    }
    creative_regression = dict(strict_regression)
    creative_regression["R004"] = FailureCategory.FORMAT_VIOLATION.value

    def dump(name: str, doc: dict) -> None:
        path = DATA / "profiles" / f"{name}.json"
        path.write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")

    dump("legacy-flexible", {
        "profile": "legacy-flexible",
        "required_features": [],
        "failure_modes": [],
        "residual_modes": [],
        "failure_rate": 0.0,
        "annotations": {},
    })
    dump("strict-instruction", {
        "profile": "strict-instruction",
        "required_features": STRICT_REQUIRED,
        "failure_modes": [m.value for m in STRICT_MODES],
        "residual_modes": [],
        "failure_rate": 0.0,
        "annotations": dict(sorted({**strict_regression, **strict_testbed}.items())),
    })
    dump("creative-verbose", {
        "profile": "creative-verbose",
        "required_features": CREATIVE_REQUIRED,
        "failure_modes": [m.value for m in STRICT_MODES + CREATIVE_ONLY_MODES],
        "residual_modes": [],
        "failure_rate": 0.0,
        "annotations": dict(sorted({**creative_regression, **creative_testbed}.items())),
    })


def verify_bundle() -> None:
    """Re-run the headline numbers before declaring the fixtures good."""
    from pmig.testbed import load_suite
    import shutil
    import tempfile

    regression = load_suite(DATA / "regression_150.json")
    testbed = load_suite(DATA / "testbed_110.json")
    legacy = load_registry(DATA / "prompts_legacy")
    migrated = load_registry(DATA / "prompts_migrated")

    expectations = [
        ("legacy-flexible", "gpt-4-32k", 100.0),
        ("strict-instruction", "gpt-4.1", 98.0),
        ("creative-verbose", "gpt-4.5-preview", 97.3),
    ]
    for profile_name, tag, expected_rate in expectations:
        profile, annotations = load_profile(profile_name)
        provider = MockProvider(profile, regression, annotations)
        report = run_suite(provider, legacy, regression, tag)
        assert report.pass_rate == expected_rate, (profile_name, report.pass_rate)

    for profile_name, tag in [("strict-instruction", "gpt-4.1"), ("creative-verbose", "gpt-4.5-preview")]:
        profile, annotations = load_profile(profile_name)
        provider = MockProvider(profile, regression, annotations)
        report = run_suite(provider, migrated, regression, tag)
        assert report.pass_rate == 100.0, (profile_name, report.pass_rate)

    # Migration loop from legacy prompts converges under strict-instruction.
    with tempfile.TemporaryDirectory() as tmp:
        shutil.copytree(DATA / "prompts_legacy", Path(tmp) / "prompts", dirs_exist_ok=True)
        registry = load_registry(Path(tmp) / "prompts")
        profile, annotations = load_profile("strict-instruction")
        provider = MockProvider(profile, (testbed, regression), annotations)
        fixer = ScriptedFixer(DATA / "fixer_snippets")
        outcome = migrate(registry, testbed, regression, provider, fixer, model_tag="gpt-4.1")
        assert outcome.status == "converged", outcome.status
        assert len(outcome.iterations) <= 9, len(outcome.iterations)
    print("bundle verification passed")


def main() -> None:
    corpus = build_corpus()
    regression = build_regression()
    testbed = generate_testbed(corpus, name="migration-testbed")
    assert len(testbed.cases) == 110, len(testbed.cases)
    assert len(regression.cases) == 150, len(regression.cases)

    testbed_counts = check_closure(testbed.cases)
    check_closure(regression.cases)
    for mode, count in testbed_counts.items():
        assert count >= 2, f"testbed needs at least two applicable cases for {mode.value}, has {count}"
    print("closure check passed:", {m.value: c for m, c in testbed_counts.items()})

    strict_testbed, creative_testbed = pick_annotations(testbed)

    save_corpus(corpus, DATA / "corpus_300.json")
    save_suite(regression, DATA / "regression_150.json")
    save_suite(testbed, DATA / "testbed_110.json")
    write_profiles(strict_testbed, creative_testbed)
    verify_bundle()
    print("fixtures written to", DATA)


if __name__ == "__main__":
    sys.exit(main())
