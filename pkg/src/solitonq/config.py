"""Strict experiment configuration (YAML).

Unknown keys anywhere fail validation before any computation starts.
"""
from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field

KINDS = ("bethe-eval", "eigencheck", "sample", "q-table", "protocol", "epr",
         "classical", "full-pipeline")


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ParamsBlock(Strict):
    b: float = -1.0
    c: float = 1.0
    B: float = 1.0
    n: int = Field(1, ge=0)
    m: int = Field(1, ge=0)


class McmcBlock(Strict):
    chains: int = 4
    samples_per_chain: int = 250_000
    burn_in: int = 25_000
    proposal_stddev: Optional[float] = None
    tune: bool = True


class ConfigPoint(Strict):
    xs: List[float] = []
    ys: List[float] = []


class BetheBlock(Strict):
    configs: List[ConfigPoint] = []
    p: float = 0.0
    dp: Optional[float] = None
    phase_accum: float = 0.0


class GridBlock(Strict):
    points_per_axis: List[int] = [48, 96]
    box_halfwidth: float = 8.0
    p: float = 0.0


class SampleBlock(Strict):
    dp: Optional[float] = None  # default: shot-noise value for q
    q: float = 2.0


class QTableBlock(Strict):
    Ns: List[int] = [2, 4]
    tol: float = 1e-3
    max_iter: int = 10


class ProtocolBlock(Strict):
    gamma: float = 4.0
    duration: float = 200.0
    b_prime: Optional[float] = None  # default: -b
    q: Union[float, Literal["auto"]] = "auto"
    scan_points: int = 41


class EprBlock(Strict):
    gammas: List[float] = [1.0, 2.0, 4.0]
    q: Union[float, Literal["auto"]] = "auto"
    sample_p_diff: bool = False


class ClassicalBlock(Strict):
    M: int = 2048
    width: float = 1.0
    halfwidth_widths: float = 40.0
    periods: float = 5.0
    dt: Optional[float] = None
    ramp_gamma: Optional[float] = None
    ramp_periods: float = 20.0
    snapshot: bool = True


class PipelineBlock(Strict):
    stages: List[Literal["adiabatic", "dispersion-management", "epr"]] = [
        "adiabatic", "dispersion-management", "epr"]


class ExperimentConfig(Strict):
    kind: Optional[Literal[KINDS]] = None
    seed: int = 0
    output: Optional[str] = None
    params: ParamsBlock = ParamsBlock()
    mcmc: McmcBlock = McmcBlock()
    bethe: BetheBlock = BetheBlock()
    grid: GridBlock = GridBlock()
    sample: SampleBlock = SampleBlock()
    qtable: QTableBlock = QTableBlock()
    protocol: ProtocolBlock = ProtocolBlock()
    epr: EprBlock = EprBlock()
    classical: ClassicalBlock = ClassicalBlock()
    pipeline: PipelineBlock = PipelineBlock()
