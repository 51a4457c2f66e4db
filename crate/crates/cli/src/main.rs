fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_env("CODIAL_LOG"))
        .with_writer(std::io::stderr)
        .init();
    std::process::exit(codial_cli::run(std::env::args_os()));
}
