use fidtrack_core::engine::config::ControlConfig;
use fidtrack_server::{control_port, CONTROL_PORT_ENV};

// The only test in this binary, so the variable is not shared.
#[test]
fn environment_overrides_the_configured_port() {
    let cfg = ControlConfig { port: 7701, ui_dir: None };
    std::env::remove_var(CONTROL_PORT_ENV);
    assert_eq!(control_port(&cfg).unwrap(), 7701);
    std::env::set_var(CONTROL_PORT_ENV, "9123");
    assert_eq!(control_port(&cfg).unwrap(), 9123);
    std::env::set_var(CONTROL_PORT_ENV, "http");
    assert!(control_port(&cfg).is_err());
    std::env::remove_var(CONTROL_PORT_ENV);
}
