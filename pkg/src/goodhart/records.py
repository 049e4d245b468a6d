"""Result records shared by the quadrature, closed-form and sampling engines."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field, replace

CSV_HEADER = ("alpha", "m_alpha", "e_g", "e_xi", "var_g", "var_xi", "cov_gxi", "rho_alpha", "method")

# Fields that carry a sampling error in Monte Carlo records.
STAT_FIELDS = ("e_g", "e_xi", "e_g2", "e_xi2", "e_gxi", "var_g", "var_xi", "cov_gxi", "rho_alpha")


class Method(str, enum.Enum):
    QUADRATURE = "Quadrature"
    CLOSED_FORM = "ClosedForm"
    ASYMPTOTIC = "Asymptotic"
    MONTE_CARLO = "MonteCarlo"


def fmt(x: float) -> str:
    """17 significant digits, enough to round-trip any double."""
    return format(float(x), ".17g")


@dataclass(frozen=True)
class TruncatedStats:
    alpha: float
    m_alpha: float
    e_g: float
    e_xi: float
    e_g2: float
    e_xi2: float
    e_gxi: float
    var_g: float
    var_xi: float
    cov_gxi: float
    cov_gm: float
    var_m: float
    rho_alpha: float
    method: Method = Method.QUADRATURE
    std_errors: dict | None = field(default=None, compare=False)

    @classmethod
    def assemble(
        cls,
        alpha: float,
        m_alpha: float,
        e_g: float,
        e_xi: float,
        var_g: float,
        var_xi: float,
        cov_gxi: float,
        method: Method = Method.QUADRATURE,
        std_errors: dict | None = None,
    ) -> "TruncatedStats":
        """Build a full record from means and the central second moments."""
        var_g = max(var_g, 0.0)
        var_xi = max(var_xi, 0.0)
        cov_gm = var_g + cov_gxi
        var_m = max(var_g + var_xi + 2.0 * cov_gxi, 0.0)
        denom = math.sqrt(var_g * var_m)
        rho = cov_gm / denom if denom > 0 else math.nan
        if not math.isnan(rho):
            rho = min(1.0, max(-1.0, rho))
        return cls(
            alpha=alpha,
            m_alpha=m_alpha,
            e_g=e_g,
            e_xi=e_xi,
            e_g2=var_g + e_g * e_g,
            e_xi2=var_xi + e_xi * e_xi,
            e_gxi=cov_gxi + e_g * e_xi,
            var_g=var_g,
            var_xi=var_xi,
            cov_gxi=cov_gxi,
            cov_gm=cov_gm,
            var_m=var_m,
            rho_alpha=rho,
            method=Method(method),
            std_errors=std_errors,
        )

    def moment(self, c: int, b: int) -> float:
        """``E[G**c xi**b | M >= m]`` for ``c + b <= 2``."""
        table = {
            (0, 0): 1.0,
            (1, 0): self.e_g,
            (0, 1): self.e_xi,
            (2, 0): self.e_g2,
            (0, 2): self.e_xi2,
            (1, 1): self.e_gxi,
        }
        return table[(c, b)]

    def violations(self, rel: float = 1e-8) -> list[str]:
        """Record invariants that fail; empty when the record is consistent."""
        out = []
        if self.var_g < 0 or self.var_m < 0:
            out.append("negative variance")
        if not math.isnan(self.rho_alpha) and not -1.0 <= self.rho_alpha <= 1.0:
            out.append("rho outside [-1, 1]")
        vm = self.var_g + self.var_xi + 2 * self.cov_gxi
        if abs(self.var_m - vm) > rel * max(abs(vm), abs(self.var_m), 1e-300) and self.var_m > 0:
            out.append("var_m identity")
        cg = self.var_g + self.cov_gxi
        if abs(self.cov_gm - cg) > rel * max(abs(cg), abs(self.var_g), 1e-300):
            out.append("cov_gm identity")
        return out

    def csv_row(self) -> list[str]:
        return [fmt(getattr(self, k)) for k in CSV_HEADER[:-1]] + [self.method.value]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["method"] = self.method.value
        return d

    def with_method(self, method: Method) -> "TruncatedStats":
        return replace(self, method=Method(method))


def partial_stats(alpha: float, m_alpha: float, e_g: float, method: Method = Method.CLOSED_FORM) -> TruncatedStats:
    """A record where only ``alpha``, ``m_alpha`` and ``e_g`` are known."""
    nan = math.nan
    return TruncatedStats(alpha, m_alpha, e_g, nan, nan, nan, nan, nan, nan, nan, nan, nan, nan, Method(method))
