"""Random forest comparator, backed by scikit-learn's tree ensembles."""

from sklearn.ensemble import RandomForestClassifier, RandomForestRegressor


def make_forest(task, n_estimators=300, max_depth=None, min_samples_leaf=1, seed=0):
    if task == "classification":
        return RandomForestClassifier(
            n_estimators=n_estimators, max_depth=max_depth, min_samples_leaf=min_samples_leaf,
            max_features="sqrt", bootstrap=True, random_state=seed, n_jobs=1)
    # Breiman's p/3 feature subsampling for regression
    return RandomForestRegressor(
        n_estimators=n_estimators, max_depth=max_depth, min_samples_leaf=min_samples_leaf,
        max_features=1 / 3, bootstrap=True, random_state=seed, n_jobs=1)
