"""RIS-assisted SWIPT massive-MIMO simulation and resource-allocation toolkit."""

from .scenario import Scenario, EhModel, StatCsi, path_loss, sample_drop, \
    scenario_from_json
from .channel import PhaseShift, ChannelDraw, sample_H1, sample_H2, cascade, \
    xi_kernel, xi_matrix
from .estimation import PilotPlan, build_pilot_plan, EstimationOutput, \
    EstimationStats, estimation_stats, receive_pilots, mmse_estimate
from .precoding import PrecoderSet, pzf_precoder, mrt_precoder, pmrt_precoder, \
    projector_B, build_precoders, PZF_MRT, PZF_PMRT
from .analysis import PowerAllocation, ClosedFormReport, sinr_pzf, sinr_ppzf, \
    q_pzf, q_ppzf, q_pzf_rayleigh, q_pzf_rayleigh_orthogonal, eh_nonlinear, \
    eh_inverse, pilot_gain_ratio, se_from_sinr, closed_form_report
from .montecarlo import OracleConfig, OracleResult, empirical_sinr, \
    empirical_energy, lemma4_oracle, wishart_oracle, verification_report

__version__ = "0.1.0"
