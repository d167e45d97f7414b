from typing import Optional


class VolrecError(Exception):
    """Base class for every error raised by the package."""


class InvalidInput(VolrecError, ValueError):
    pass


class DegenerateCovariance(VolrecError):
    pass


class NumericalFailure(VolrecError):
    pass


class SamplerExhausted(VolrecError):
    pass


class DegenerateErrors(VolrecError):
    pass


class SingularProjection(VolrecError):
    pass


class InfeasibleReconciliation(VolrecError):
    pass


class DegenerateVariance(VolrecError):
    pass


class EstimationFailure(VolrecError):
    def __init__(
        self,
        message: str,
        stage: str = "fit",
        asset: Optional[int] = None,
        diagnostics: Optional[dict] = None,
    ) -> None:
        self.stage = stage
        self.asset = asset
        self.diagnostics = diagnostics or {}
        detail = f"stage={stage}"
        if asset is not None:
            detail += f" asset={asset}"
        super().__init__(f"{message} ({detail})")


class ConfigurationError(VolrecError):
    def __init__(self, message: str, field: Optional[str] = None) -> None:
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class IngestError(VolrecError):
    def __init__(self, kind: str, message: str, row: Optional[int] = None) -> None:
        self.kind = kind
        self.row = row
        location = f" row {row}" if row is not None else ""
        super().__init__(f"{kind}{location}: {message}")
