"""The 19-way SemEval-2010 Task 8 label inventory."""

RELATION_TYPES = (
    "Cause-Effect",
    "Component-Whole",
    "Content-Container",
    "Entity-Destination",
    "Entity-Origin",
    "Message-Topic",
    "Member-Collection",
    "Instrument-Agency",
    "Product-Producer",
)
OTHER = "Other"

# Fixed order: every type in both directions, then Other last.
LABELS = tuple(f"{t}({d})" for t in RELATION_TYPES for d in ("e1,e2", "e2,e1")) + (OTHER,)
LABEL_INDEX = {label: i for i, label in enumerate(LABELS)}


def split_label(label):
    """``"Cause-Effect(e2,e1)"`` -> ``("Cause-Effect", "e2,e1")``; Other -> ``("Other", None)``."""
    if label == OTHER:
        return OTHER, None
    if not label.endswith(")") or "(" not in label:
        raise ValueError(f"unknown relation label {label!r}")
    name, direction = label[:-1].split("(", 1)
    if direction not in ("e1,e2", "e2,e1"):
        raise ValueError(f"bad direction in relation label {label!r}")
    return name, direction


def relation_type(label):
    return split_label(label)[0]
