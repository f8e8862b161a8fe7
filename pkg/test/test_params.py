import pytest

from tfqkd_sim import params, simulator
from tfqkd_sim.core import ConfigError, IntensityTriple, ProtocolConfig, Variant
from tfqkd_sim.params import Params, config_hash, loss_grid


def test_get_and_defaults():
    p = Params({'channel': {'total_loss_db': 30.0}})
    assert p.get('~channel/total_loss_db') == 30.0
    assert p.get('channel/total_loss_db') == 30.0
    assert p.get('~channel/asymmetry_db', 0.0) == 0.0
    with pytest.raises(ConfigError):
        p.get('~detector/visibility')


def test_set_creates_sections():
    p = Params()
    p.set('~protocol/variant', 'curty')
    assert p.section('protocol') == {'variant': 'curty'}
    assert p.section('channel') == {}


def test_non_mapping_rejected():
    with pytest.raises(ConfigError):
        Params([1, 2])
    with pytest.raises(ConfigError):
        Params({'channel': 3}).section('channel')


def test_unknown_key_rejected():
    with pytest.raises(ConfigError) as e:
        params.detector_params(Params({'detector': {'dark_rate': 22.0}}))
    assert 'dark_rate' in str(e.value)


def test_numeric_strings_are_coerced():
    det = params.detector_params(Params({'detector': {'gate_width_s': '0.5e-9',
                                                      'clock_rate_hz': '1e9'}}))
    assert det.gate_width_s == 0.5e-9
    assert det.clock_rate_hz == 1e9
    with pytest.raises(ConfigError):
        params.detector_params(Params({'detector': {'visibility': 'high'}}))


def test_protocol_section():
    p = Params({'protocol': {'variant': 'sns', 'intensities': {'u': 0.2, 'v': 0.08, 'w': 0.0},
                             'intensity_probs': [0.5, 0.25, 0.25]},
                'sweep': {'curty_intensities': {'u': 0.02, 'v': 0.2, 'w': 5e-6}}})
    cfg = params.protocol_config(p)
    assert cfg.variant is Variant.SEND_NOT_SEND
    assert cfg.intensities == IntensityTriple(0.2, 0.08, 0.0)
    assert cfg.intensity_probs == (0.5, 0.25, 0.25)
    curty = params.protocol_config(p, variant='curty')
    assert curty.intensities == IntensityTriple(0.02, 0.2, 5e-6)
    with pytest.raises(ConfigError):
        params.protocol_config(Params({'protocol': {'intensities': {'u': 0.2}}}))


def test_channel_override():
    ch = params.channel_params(Params({'channel': {'total_loss_db': 30.0}}), total_loss_db=50.0)
    assert ch.total_loss_db == 50.0
    assert params.channel_params(Params()).total_loss_db == 0.0


def test_session_section():
    p = Params({'session': {'n_gates': 1000, 'feedback_off_windows': [[1, 2]]}})
    cfg = params.session_config(p, seed=9)
    assert cfg.rng_seed == 9
    assert cfg.feedback_off_windows == ((1.0, 2.0),)
    with pytest.raises(ConfigError):
        params.session_config(Params({'session': {'channel': {}}}))


def test_loss_grid_is_inclusive():
    grid = loss_grid(Params({'sweep': {'loss_start_db': 10.0, 'loss_stop_db': 12.0,
                                       'loss_step_db': 0.5}}))
    assert grid == [10.0, 10.5, 11.0, 11.5, 12.0]
    assert len(loss_grid(Params())) == 91
    with pytest.raises(ConfigError):
        loss_grid(Params({'sweep': {'loss_step_db': 0.0}}))
    with pytest.raises(ConfigError):
        loss_grid(Params({'sweep': {'loss_step': 1.0}}))


def test_sweep_protocols():
    assert params.sweep_protocols(Params()) == list(Variant)
    assert params.sweep_protocols(Params({'sweep': {'protocols': ['sns']}})) == [
        Variant.SEND_NOT_SEND]


def test_config_hash_is_stable():
    h = config_hash(ProtocolConfig())
    assert len(h) == 16
    int(h, 16)
    assert h == config_hash(ProtocolConfig())
    assert h != config_hash(ProtocolConfig(epsilon=0.1))


@pytest.mark.parametrize('name', [
    'link_model.yaml',
    'sweep_default.yaml',
    'session_feedback_toggle.yaml',
    'session_feedback_on_30db.yaml',
    'session_slicing_noiseless.yaml',
    'session_continuous_phase.yaml',
])
def test_bundled_parameter_files_load(param_path, name):
    p = Params.load(param_path(name))
    params.protocol_config(p)
    params.detector_params(p)
    params.feedback_params(p)
    params.channel_params(p)
    if p.section('session'):
        params.session_config(p)
    if p.section('sweep'):
        assert loss_grid(p)


def test_fitted_model_file(param_path):
    p = Params.load(param_path('link_model.yaml'))
    assert params.detector_params(p).noise_click_prob == pytest.approx(25.9e-9)
    assert params.feedback_params(p).misalignment_coefficient == 0.7


def test_continuous_phase_file(param_path):
    cfg = params.session_config(Params.load(param_path('session_continuous_phase.yaml')))
    assert cfg.protocol.phase_levels == 0
    assert cfg.det.visibility == 0.987
    assert cfg.fb.opll_phase_variance_rad2 == 0.0
    assert simulator.static_visibility(cfg.det, cfg.fb) == 0.987


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        Params.load(str(tmp_path / 'absent.yaml'))
    bad = tmp_path / 'bad.yaml'
    bad.write_text('protocol: [unclosed\n')
    with pytest.raises(ConfigError):
        Params.load(str(bad))
