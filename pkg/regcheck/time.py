"""Timestamps and JSON output for every artifact regcheck writes.

Transcripts, checklists, judgments and reports all go through
:py:func:`dumps`, so dates, decimals, enums and regulation ids are
serialized the same way everywhere.
"""

import json
from datetime import datetime
from decimal import Decimal
from enum import Enum
from pathlib import PurePath

from pytz import timezone

utc = timezone("utc")


def now_with_tz() -> datetime:
    """Like datetime.utcnow(), but including tzinfo."""
    return datetime.now(utc)


class DJSONEncoder(json.JSONEncoder):
    """JSON encoder that outputs dates, decimals, enums and ids.

    Example usage::

        DJSONEncoder().encode([NormType.POSITIVE, now_with_tz()])
        '["Positive", "2024-01-21T14:42:28.123+00:00"]'
    """

    def default(self, obj):
        if hasattr(obj, "isoformat"):
            return obj.isoformat()
        elif isinstance(obj, Decimal):
            return float(str(obj))
        elif isinstance(obj, Enum):
            return obj.value
        elif isinstance(obj, PurePath):
            return str(obj)
        elif hasattr(obj, "canonical"):  # RegulationId
            return obj.canonical
        else:
            return super(DJSONEncoder, self).default(obj)


def dumps(value, **kw) -> str:
    """Like json.dumps, but using DJSONEncoder.

    Output is deterministic: keys keep insertion order and non-ASCII text
    is written as is.
    """
    kw.setdefault("ensure_ascii", False)
    return json.dumps(value, cls=DJSONEncoder, **kw)
