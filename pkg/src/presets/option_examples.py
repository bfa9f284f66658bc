from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from cubature_errors import CubatureConfigError
from model import ModelSpec, PayoffSpec, load_model_config

# =====================================================
# Basket options checked by call-put parity
# =====================================================
# Weights are 1 per asset here: the at-the-money strike equals the basket spot
PARITY_BASKETS = {
    't1': {'d': 2, 'spots': 50.0, 'vols': 0.4, 'rho': 0.3, 'rate': 0.05, 'maturity': 3.0,
           'strikes': {'K1': 100.0, 'K2': 127.80, 'K3': 300.0}},
    't2': {'d': 2, 'spots': 50.0, 'vols': 0.2, 'rho': 0.7, 'rate': 0.05, 'maturity': 3.0,
           'strikes': {'K1': 100.0, 'K2': 127.80, 'K3': 300.0}},
    't3': {'d': 3, 'spots': 30.0, 'vols': 0.2, 'rho': 0.3, 'rate': 0.05, 'maturity': 3.0,
           'strikes': {'K1': 90.0, 'K2': 120.0}},
    't4': {'d': 4, 'spots': 20.0, 'vols': 0.1, 'rho': 0.3, 'rate': 0.05, 'maturity': 1.0,
           'strikes': {'K1': 80.0, 'K2': 90.0}},
}

# =====================================================
# Named examples (homogeneous weights 1/d)
# =====================================================
BARRIER = 60.0
VOLS_FIVE_ASSETS = [0.156, 0.442, 0.325, 0.134, 0.114]

NAMED_EXAMPLES = {
    # put on minimum
    'Ex1': {'d': 2, 'rho': 0.1, 'strike': 45.0, 'payoff': 'put_on_min'},
    'Ex2': {'d': 2, 'rho': 0.9, 'strike': 55.0, 'payoff': 'put_on_min'},
    'Ex3': {'d': 3, 'rho': 0.1, 'strike': 45.0, 'payoff': 'put_on_min'},
    'Ex4': {'d': 3, 'rho': 0.9, 'strike': 55.0, 'payoff': 'put_on_min'},
    'Ex5': {'d': 4, 'rho': 0.1, 'strike': 45.0, 'payoff': 'put_on_min'},
    'Ex6': {'d': 4, 'rho': 0.9, 'strike': 55.0, 'payoff': 'put_on_min'},
    # digital basket with barriers U_i = 60
    'Ex7': {'d': 2, 'rho': 0.1, 'strike': 45.0, 'payoff': 'digital_basket'},
    'Ex8': {'d': 2, 'rho': 0.9, 'strike': 55.0, 'payoff': 'digital_basket'},
    'Ex9': {'d': 3, 'rho': 0.1, 'strike': 45.0, 'payoff': 'digital_basket'},
    'Ex10': {'d': 3, 'rho': 0.9, 'strike': 55.0, 'payoff': 'digital_basket'},
    'Ex11': {'d': 4, 'rho': 0.1, 'strike': 45.0, 'payoff': 'digital_basket'},
    'Ex12': {'d': 4, 'rho': 0.9, 'strike': 55.0, 'payoff': 'digital_basket'},
    # Delta examples
    'Ex13': {'d': 3, 'rho': 0.1, 'strike': 45.0, 'payoff': 'basket_call'},
    'Ex14': {'d': 3, 'rho': 0.5, 'strike': 55.0, 'payoff': 'put_on_min'},
    'Ex15': {'d': 4, 'rho': 0.1, 'strike': 45.0, 'payoff': 'basket_call'},
    'Ex16': {'d': 4, 'rho': 0.5, 'strike': 55.0, 'payoff': 'put_on_min'},
    # control variates in dimension 5
    'Ex17': {'d': 5, 'rho': 0.9, 'strike': 45.0, 'payoff': 'basket_call', 'vols': VOLS_FIVE_ASSETS},
    'Ex18': {'d': 5, 'rho': 0.1, 'strike': 45.0, 'payoff': 'basket_call', 'vols': VOLS_FIVE_ASSETS},
    'Ex19': {'d': 5, 'rho': -0.1, 'strike': 45.0, 'payoff': 'basket_call', 'vols': VOLS_FIVE_ASSETS},
}


def block_correlation(sizes: Sequence[int], within: Sequence[float], across: float) -> np.ndarray:
    """
    Block correlation matrix: constant correlation inside each group, `across` between groups

    Args:
        sizes: Number of assets per group
        within: Correlation inside each group
        across: Correlation between assets of different groups

    Returns:
        (sum(sizes), sum(sizes)) correlation matrix
    """
    if len(sizes) != len(within):
        raise CubatureConfigError("One within-group correlation per group is required")
    d = int(sum(sizes))
    gamma = np.full((d, d), float(across))
    start = 0
    for size, rho in zip(sizes, within):
        gamma[start:start + size, start:start + size] = rho
        start += size
    np.fill_diagonal(gamma, 1.0)
    return gamma


def ex20_correlation() -> np.ndarray:
    """Two groups of five assets, 0.8 and 0.4 inside, -0.5 across"""
    return block_correlation((5, 5), (0.8, 0.4), -0.5)


# =====================================================
# DOCUMENT BUILDERS
# =====================================================
def parity_document(table_id: str, strike_label: str, payoff: str = 'basket_call') -> Dict[str, Any]:
    config = PARITY_BASKETS[table_id]
    d = config['d']
    return {
        'd': d,
        'spots': [config['spots']] * d,
        'vols': [config['vols']] * d,
        'rate': config['rate'],
        'maturity': config['maturity'],
        'correlation': {'rho': config['rho']},
        'weights': [1.0] * d,
        'strike': config['strikes'][strike_label],
        'payoff': payoff,
    }


def example_document(name: str) -> Dict[str, Any]:
    if name == 'Ex20':
        return {
            'd': 10,
            'spots': [100.0] * 10,
            'vols': [0.2] * 10,
            'rate': 0.02,
            'maturity': 2.0,
            'correlation': {'matrix': ex20_correlation().tolist()},
            'strike': 105.0,
            'payoff': 'basket_call',
        }
    config = NAMED_EXAMPLES[name]
    d = config['d']
    document = {
        'd': d,
        'spots': [50.0] * d,
        'vols': list(config.get('vols', [0.2] * d)),
        'rate': 0.05,
        'maturity': 1.0,
        'correlation': {'rho': config['rho']},
        'strike': config['strike'],
        'payoff': config['payoff'],
    }
    if config['payoff'] == 'digital_basket':
        document['barriers'] = [BARRIER] * d
    return document


def preset_documents() -> Dict[str, Dict[str, Any]]:
    """Every named preset: Ex1..Ex20 and the parity baskets as '<table>_<strike>'"""
    documents = {name: example_document(name) for name in NAMED_EXAMPLES}
    documents['Ex20'] = example_document('Ex20')
    for table_id, config in PARITY_BASKETS.items():
        for label in config['strikes']:
            documents[f'{table_id}_{label}'] = parity_document(table_id, label)
    return documents


def list_presets() -> List[str]:
    return sorted(preset_documents())


def get_preset(name: str) -> Tuple[ModelSpec, PayoffSpec]:
    """
    Model and payoff of a named preset

    Args:
        name: Ex1..Ex20 or a parity basket such as 't1_K1'

    Returns:
        (ModelSpec, PayoffSpec)
    """
    documents = preset_documents()
    if name not in documents:
        raise CubatureConfigError(f"Unknown preset '{name}'. Available: {', '.join(sorted(documents))}")
    return load_model_config(documents[name])
