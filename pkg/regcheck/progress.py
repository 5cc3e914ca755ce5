"""Report progress periodically while annotating or judging.

Annotating a full regulation or judging hundreds of cases takes minutes
against a live provider. Encapsulate the iterable of finished work::

    for index, future in ShowingProgress(as_completed(futures), total=len(futures)):
        ...

A message is logged every so many seconds, not every so many items, so
updates appear steadily whatever the speed of the provider.
"""

import logging
from datetime import timedelta
from typing import Callable, Iterable, Iterator, Optional, Tuple, TypeVar

from regcheck.time import now_with_tz

T = TypeVar("T")
log = logging.getLogger(__name__)


class ShowingProgress:
    """A generator that encapsulates your iterable and logs its progress.

    When ``total`` is known, the message shows the percentage done and an
    estimate of the time remaining.
    """

    def __init__(
        self,
        iterable: Iterable[T],
        total: Optional[int] = None,
        label: str = "Item",
        seconds: float = 6,
        clock: Callable = now_with_tz,
    ):
        self.iterable = iterable
        self.total = total
        self.label = label
        self.seconds = timedelta(seconds=seconds)
        self.clock = clock

    def message(self, index: int, elapsed: timedelta) -> str:
        if not self.total:
            return "{} #{} done. Working...".format(self.label, index)
        percent = 100 * index / self.total
        remaining = elapsed * (self.total - index) / index
        return "{} {}/{} ({:.1f}% done, {} left)".format(
            self.label, index, self.total, percent, str(remaining).split(".")[0]
        )

    def __iter__(self) -> Iterator[Tuple[int, T]]:
        started = printed = self.clock()
        index = 0
        for index, o in enumerate(self.iterable, 1):  # Start counting at 1
            yield index, o
            now = self.clock()
            if self.seconds > now - printed:
                continue
            log.info(self.message(index, now - started))
            printed = now
        log.info(
            "Done in %s! Total %s: %d",
            str(self.clock() - started).split(".")[0],
            self.label.lower() + "s",
            index,
        )
