//! Regenerates the checked-in case-study fixture:
//! `cargo run -p threadreq-cli --example gen_case_study`

#[path = "../tests/support/case_study.rs"]
mod case_study;

fn main() -> std::io::Result<()> {
    let dir = case_study::fixture_dir();
    std::fs::create_dir_all(&dir)?;
    for (name, contents) in case_study::generate().files() {
        std::fs::write(dir.join(name), contents)?;
        println!("wrote {}", dir.join(name).display());
    }
    Ok(())
}
