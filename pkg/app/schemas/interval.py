"""
A module for interval in the app-schemas package.
"""

from typing import Self

from pydantic import BaseModel, ConfigDict, Field, model_validator


class Interval(BaseModel):
    """Closed real interval used for HPD, confidence and identified-set
    reports."""

    model_config = ConfigDict(frozen=True)

    lo: float = Field(..., title="Lower end", description="Lower endpoint")
    hi: float = Field(..., title="Upper end", description="Upper endpoint")

    @model_validator(mode="after")
    def check_order(self) -> Self:
        """
        Check that the endpoints are ordered

        :return: The validated interval
        :rtype: Self
        """
        if self.lo > self.hi:
            raise ValueError(f"Interval lower end {self.lo} exceeds {self.hi}")
        return self

    @property
    def length(self) -> float:
        """
        The interval length

        :return: hi - lo
        :rtype: float
        """
        return self.hi - self.lo

    def contains(self, value: float) -> bool:
        """
        Check whether a value lies inside the closed interval

        :param value: The value to test
        :type value: float
        :return: True when lo <= value <= hi
        :rtype: bool
        """
        return self.lo <= value <= self.hi
