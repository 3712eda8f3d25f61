#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
.envファイルの読み込みをテストするスクリプト
"""

import os
import sys


def test_env():
    """環境変数のテスト"""
    print("=" * 60)
    print(".envファイルの読み込みテスト")
    print("=" * 60)

    try:
        from dotenv import load_dotenv
    except ImportError:
        print("✗ python-dotenv がインストールされていません。")
        print("\n以下のコマンドでインストールしてください:")
        print("pip install python-dotenv")
        return 1

    # .envファイルを読み込む
    load_dotenv()

    status = 0
    for name, default in (("EICS_SEED", "0"), ("EICS_JOBS", "1")):
        value = os.getenv(name)
        if value is None:
            print(f"⚠️  {name} は未設定です（既定値 {default} を使用）")
            continue
        try:
            number = int(value)
        except ValueError:
            print(f"✗ {name} は整数である必要があります: {value!r}")
            status = 1
            continue
        if name == "EICS_JOBS" and number < 1:
            print(f"✗ EICS_JOBS は1以上である必要があります: {number}")
            status = 1
        else:
            print(f"✓ {name} = {number}")

    if status == 0:
        print("\n✓ .envファイルの設定は正常です！")
    return status


if __name__ == "__main__":
    sys.exit(test_env())
