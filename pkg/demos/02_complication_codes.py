"""
Counting postoperative complications
====================================

The outcome variable C counts how many of a case's discharge diagnoses
fall under the postoperative-complication code classes (ICD-9-CM range
996-999). This demo walks through the matching rules.
"""

from surgnet.complications import (ComplicationCodeset, count_complications,
                                   match_complication, normalize_icd9)
from surgnet.records import CaseRecord

codeset = ComplicationCodeset.embedded()
print(f"embedded codeset: {len(codeset.entries)} code classes")
for entry in codeset.entries[:5]:
    print(f"  {entry.prefix:<7} {entry.definition}")
print("  ...")

# Codes arrive in several spellings; normalization upper-cases and
# restores the decimal point of plain digit strings.
for raw in ("99659", "996.59", " 997.1 ", "E878.1"):
    print(f"normalize {raw!r:<10} -> {normalize_icd9(raw)!r}")

# A diagnosis matches a class when it equals the prefix or extends it
# with further digits; a bare three-digit class code matches the first
# class that refines it.
for code in ("996.52", "996.529", "996", "250.00"):
    entry = match_complication(code, codeset)
    hit = entry.prefix if entry else "no match"
    print(f"match {code:<8} -> {hit}")

# The worked example: two of the three discharge diagnoses are
# complication codes, so C = 2. Repeats of the same class still count
# once per occurrence unless distinct=True.
case = CaseRecord(case_id="c1", day_offset=0, end_day_offset=6,
                  providers=frozenset(["anna", "ben"]), age=64,
                  gender="male", surgery_type=3,
                  dx_codes=("996.52", "998.59", "250.00"))
print(f"\ndx {list(case.dx_codes)} -> C = {count_complications(case, codeset)}")

twice = CaseRecord(case_id="c2", day_offset=0, end_day_offset=6,
                   providers=frozenset(["anna"]), age=70, gender="female",
                   surgery_type=1, dx_codes=("998.59", "998.59"))
print(f"dx {list(twice.dx_codes)} -> C = {count_complications(twice, codeset)}"
      f" (occurrences), "
      f"{count_complications(twice, codeset, distinct=True)} (distinct)")
