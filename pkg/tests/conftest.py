from hypothesis import settings

settings.register_profile("ci", derandomize=True, max_examples=60, deadline=None)
settings.load_profile("ci")


def pytest_addoption(parser):
    parser.addoption(
        "--real-data", default=None,
        help="directory of extractor-produced stores/tasks for the optional "
             "real-model spot check")
