fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = softmanifold_cli::run_from(std::env::args_os()) {
        eprintln!("softman: {e}");
        std::process::exit(e.exit_code());
    }
}
