//! Regenerate `data/tip_reference.json` from the built-in templates.

use microseg::tip::TipReference;

fn main() -> microseg::Result<()> {
    println!("{}", TipReference::from_templates()?.to_json());
    Ok(())
}
