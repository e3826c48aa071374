from hypothesis import settings

# numba compiles on first use, which trips per-example deadlines
settings.register_profile("sgadi", deadline=None)
settings.load_profile("sgadi")


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
