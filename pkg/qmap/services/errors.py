class ContractViolation(ValueError):
    """A preset, dataset, level set or checkpoint that does not fit the requested run"""
    pass
