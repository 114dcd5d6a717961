"""Monthly date labels of the form ``YYYY-MM`` and integer month indices."""
import re

_PAT = re.compile(r"^(\d{4})[-/](\d{1,2})$")


def to_index(label):
    m = _PAT.match(str(label).strip())
    if not m:
        raise ValueError(f"bad month label {label!r}; expected YYYY-MM")
    year, month = int(m.group(1)), int(m.group(2))
    if not 1 <= month <= 12:
        raise ValueError(f"bad month in {label!r}")
    return year * 12 + month - 1


def to_label(index):
    year, month0 = divmod(int(index), 12)
    return f"{year:04d}-{month0 + 1:02d}"


def shift(label, months):
    return to_label(to_index(label) + months)


def month_range(start, end):
    """Inclusive list of labels from ``start`` to ``end``."""
    return [to_label(i) for i in range(to_index(start), to_index(end) + 1)]
