//! Constraint specs such as `coincident(0.end,1.start)` or `horizontal(2)`.

use cadkit_core::{Constraint, ConstraintKind, Ref, SubRef};

fn parse_ref(s: &str) -> Result<Ref, String> {
    let s = s.trim();
    let (id, sub) = match s.split_once('.') {
        Some((id, sub)) => (id, SubRef::from_name(sub.trim()).ok_or_else(|| format!("unknown sub-reference `{sub}`"))?),
        None => (s, SubRef::Entire),
    };
    let id = id.trim().parse::<u32>().map_err(|_| format!("`{id}` is not a primitive id"))?;
    Ok(Ref::new(id, sub))
}

pub fn parse_constraint_spec(spec: &str) -> Result<Constraint, String> {
    let spec = spec.trim();
    let (name, rest) = spec.split_once('(').ok_or_else(|| format!("expected kind(ref[,ref]), got `{spec}`"))?;
    let args = rest.strip_suffix(')').ok_or_else(|| "missing closing parenthesis".to_string())?;
    let kind = ConstraintKind::from_name(name.trim()).ok_or_else(|| format!("unknown constraint kind `{}`", name.trim()))?;
    let refs: Vec<Ref> = args.split(',').map(parse_ref).collect::<Result<_, _>>()?;
    match (refs.as_slice(), kind.is_unary()) {
        ([a], true) => Ok(Constraint::new(kind, *a, *a)),
        ([a, b], _) => Ok(Constraint::new(kind, *a, *b)),
        _ if kind.is_unary() => Err(format!("{name} takes one reference")),
        _ => Err(format!("{name} takes two references")),
    }
}
