//! Result rows printed as CSV, or as a JSON array of objects with the same
//! columns.

use std::io::Write;

use serde_json::{Map, Number, Value};

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &str) -> Self {
        Self {
            header: header.split(',').map(str::to_string).collect(),
            rows: Vec::new(),
        }
    }

    /// Append a row given as comma-separated fields.
    pub fn push_csv(&mut self, row: &str) {
        self.push(row.split(',').map(str::to_string).collect());
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(
            row.len(),
            self.header.len(),
            "row width does not match header"
        );
        self.rows.push(row);
    }

    pub fn write(&self, json: bool, out: &mut impl Write) -> std::io::Result<()> {
        if json {
            let rows: Vec<Value> = self
                .rows
                .iter()
                .map(|r| {
                    let obj: Map<String, Value> = self
                        .header
                        .iter()
                        .cloned()
                        .zip(r.iter().map(|v| typed(v)))
                        .collect();
                    Value::Object(obj)
                })
                .collect();
            serde_json::to_writer_pretty(&mut *out, &rows)?;
            writeln!(out)
        } else {
            writeln!(out, "{}", self.header.join(","))?;
            for r in &self.rows {
                writeln!(out, "{}", r.join(","))?;
            }
            Ok(())
        }
    }
}

fn typed(v: &str) -> Value {
    if let Ok(i) = v.parse::<i64>() {
        return Value::Number(i.into());
    }
    if let Some(n) = v.parse::<f64>().ok().and_then(Number::from_f64) {
        return Value::Number(n);
    }
    match v {
        "true" => Value::Bool(true),
        "false" => Value::Bool(false),
        "" => Value::Null,
        _ => Value::String(v.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_json_agree() {
        let mut t = Table::new("a,b,c,d");
        t.push_csv("1,2.5,x,true");
        t.push_csv("-3,,NaN,false");
        let mut csv = Vec::new();
        t.write(false, &mut csv).unwrap();
        assert_eq!(
            String::from_utf8(csv).unwrap(),
            "a,b,c,d\n1,2.5,x,true\n-3,,NaN,false\n"
        );
        let mut json = Vec::new();
        t.write(true, &mut json).unwrap();
        let v: Value = serde_json::from_slice(&json).unwrap();
        assert_eq!(v[0]["a"], 1);
        assert_eq!(v[0]["b"], 2.5);
        assert_eq!(v[0]["c"], "x");
        assert_eq!(v[0]["d"], true);
        assert_eq!(v[1]["b"], Value::Null);
        assert_eq!(v[1]["c"], "NaN");
    }
}
