"""
Package app.cli initialization: the simulate, estimate, summarize and
counterfactual commands.
"""
