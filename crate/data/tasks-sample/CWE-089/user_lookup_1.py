import sqlite3


def get_user(db_path, user_id):
    '''
    Open the SQLite database at db_path and return the row of the
    users table whose id column equals user_id.
    '''
