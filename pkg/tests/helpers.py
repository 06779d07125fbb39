"""Small topology builders shared by the control-plane and acceptance tests."""
import random

from fscdsim.control_plane import ControlLink, ControlPlane, LayerNode
from fscdsim.fscd import Fscd, FscdConfig, FscdState
from fscdsim.otdr import EO_SWITCH, MEMS_VOA
from fscdsim.sim_core import Engine, ms, ns
from fscdsim.wire import Layer


def build_plane(regions, link_len=2.0, src_proc=0, msm_proc=0, agent_len=None, seed=0,
                configs=None, states=None, paths=None, link_proc=0):
    """``regions`` maps controller id -> agent ids."""
    eng = Engine(seed)
    records = []
    agents = {}
    for ctrl, members in regions.items():
        for a in members:
            cfg = (configs or {}).get(a, FscdConfig(gate=EO_SWITCH))
            agents[a] = Fscd(a, cfg, eng, (states or {}).get(a, FscdState.ALL_ENABLED), sink=records)
            agents[a].allowed_interrogators = frozenset({"OTDR_A"})
    src_proc = src_proc if isinstance(src_proc, dict) else {c: src_proc for c in regions}
    controllers = [LayerNode(Layer.SRC, c, tuple(m), src_proc[c]) for c, m in regions.items()]
    msm = LayerNode(Layer.MSM, "MSM", tuple(regions), msm_proc)
    agent_len = agent_len or {}
    links = [ControlLink("MSM", c, link_len, link_proc) for c in regions]
    links += [ControlLink(c, a, agent_len.get(a, link_len), link_proc) for c, m in regions.items() for a in m]
    if paths is None:
        paths = {"p_all": [a for m in regions.values() for a in m]}
    plane = ControlPlane(eng, msm, controllers, agents, links, paths, sink=records)
    return eng, plane, records


def random_topology(rng: random.Random):
    n_regions = rng.randint(1, 3)
    regions, configs, states, agent_len = {}, {}, {}, {}
    k = 0
    for r in range(n_regions):
        members = []
        for _ in range(rng.randint(1, 4)):
            k += 1
            a = f"A{k}"
            members.append(a)
            configs[a] = FscdConfig(gate=rng.choice([EO_SWITCH, MEMS_VOA]),
                                    agent_decision_time=rng.randint(0, ns(50)))
            states[a] = rng.choice(list(FscdState))
            agent_len[a] = rng.uniform(0.0, 20_000.0)
        regions[f"S{r}"] = members
    detector = rng.choice([a for m in regions.values() for a in m])
    states[detector] = rng.choice([FscdState.ALL_ENABLED, FscdState.BLS_ONLY])
    src_proc = {c: rng.randint(0, ms(1)) for c in regions}
    return regions, configs, states, agent_len, src_proc, rng.randint(0, ms(3)), detector


def random_alert_rows(rng: random.Random):
    """Build a random topology, fire one unauthorized pulse and return (rows, n_regions, agent blocking time)."""
    from fscdsim.control_plane import response_rows
    from fscdsim.sim_core import us

    regions, configs, states, agent_len, src_proc, msm_proc, det = random_topology(rng)
    eng, plane, records = build_plane(regions, link_len=rng.uniform(0, 5000), src_proc=src_proc,
                                      msm_proc=msm_proc, agent_len=agent_len, configs=configs,
                                      states=states, link_proc=rng.randint(0, ns(500)))
    eng.run_until(us(1))
    plane.pulse(det, 10.0, us(1), "rogue")
    eng.run()
    return response_rows(records), len(regions), configs[det].blocking_time
